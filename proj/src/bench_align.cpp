#include "trace_forge/bench_align.hpp"

#include "trace_forge/errors.hpp"

namespace trace_forge {
namespace {

LineQuery align_at(const LineQuery& query, const LineMap& map, std::size_t index) {
    if (query.task == BenchTask::OP) return query;
    if (!query.line) throw std::invalid_argument("query " + std::to_string(index) + ": line-based task without a line");
    const auto mapped = map.lookup(*query.line);
    if (!mapped) throw LineOutOfRange(*query.line, index);
    LineQuery out = query;
    out.line = *mapped;
    return out;
}

}  // namespace

std::string_view to_string(BenchTask task) {
    switch (task) {
        case BenchTask::CCP: return "CCP";
        case BenchTask::PSP: return "PSP";
        case BenchTask::EPP: return "EPP";
        case BenchTask::OP: return "OP";
    }
    return "OP";
}

BenchTask bench_task_from_string(std::string_view text) {
    if (text == "CCP") return BenchTask::CCP;
    if (text == "PSP") return BenchTask::PSP;
    if (text == "EPP") return BenchTask::EPP;
    if (text == "OP") return BenchTask::OP;
    throw std::invalid_argument("unknown benchmark task: " + std::string(text));
}

void to_json(Json& j, const LineQuery& q) {
    j = Json{{"program_id", q.program_id}, {"task", std::string(to_string(q.task))}, {"payload", q.payload}};
    if (q.line) j["line"] = *q.line;
}

void from_json(const Json& j, LineQuery& q) {
    q.program_id = j.value("program_id", std::string());
    q.task = bench_task_from_string(j.at("task").get<std::string>());
    q.line.reset();
    if (j.contains("line") && !j.at("line").is_null()) q.line = j.at("line").get<int>();
    q.payload = j.value("payload", std::string());
    if (q.task != BenchTask::OP && !q.line) throw std::invalid_argument("line-based query without a line");
}

LineQuery align(const LineQuery& query, const LineMap& map) { return align_at(query, map, 0); }

std::vector<LineQuery> align_file(const std::vector<LineQuery>& queries, const LineMap& map) {
    std::vector<LineQuery> out;
    out.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) out.push_back(align_at(queries[i], map, i));
    return out;
}

}  // namespace trace_forge
