#include "trace_forge/records.hpp"

#include <fstream>
#include <iostream>

#include "trace_forge/errors.hpp"

namespace trace_forge {

void to_json(Json& j, const SourceProgram& p) {
    j = Json{{"id", p.id}, {"entry_name", p.entry_name}, {"source_text", p.source_text}};
}

void from_json(const Json& j, SourceProgram& p) {
    p.id = j.value("id", std::string{});
    j.at("entry_name").get_to(p.entry_name);
    j.at("source_text").get_to(p.source_text);
}

void to_json(Json& j, const AnchorDecl& a) {
    j = Json{{"name", a.name}, {"line", a.line}, {"kind", std::string(to_string(a.kind))}};
}

void from_json(const Json& j, AnchorDecl& a) {
    j.at("name").get_to(a.name);
    j.at("line").get_to(a.line);
    a.kind = anchor_kind_from_string(j.at("kind").get<std::string>());
}

void to_json(Json& j, const InstrumentedProgram& p) {
    Json map = Json::array();
    for (const auto& [orig, instr] : p.line_map.pairs) map.push_back(Json::array({orig, instr}));
    j = Json{{"origin_id", p.origin_id},
             {"entry_name", p.entry_name},
             {"source_text", p.source_text},
             {"anchors", p.anchors},
             {"line_map", std::move(map)}};
}

void from_json(const Json& j, InstrumentedProgram& p) {
    j.at("origin_id").get_to(p.origin_id);
    p.entry_name = j.value("entry_name", std::string{});
    j.at("source_text").get_to(p.source_text);
    j.at("anchors").get_to(p.anchors);
    p.line_map.pairs.clear();
    for (const auto& pair : j.at("line_map")) {
        p.line_map.pairs.emplace_back(pair.at(0).get<int>(), pair.at(1).get<int>());
    }
}

void to_json(Json& j, const ExecutionTrace& t) {
    Json events = Json::array();
    for (const auto& e : t.events) events.push_back(Json::array({e.name, e.value}));
    j = Json{{"origin_id", t.origin_id}, {"events", std::move(events)}, {"final_value", t.final_value}};
}

void from_json(const Json& j, ExecutionTrace& t) {
    j.at("origin_id").get_to(t.origin_id);
    t.events.clear();
    for (const auto& e : j.at("events")) {
        t.events.push_back({e.at(0).get<std::string>(), e.at(1).get<std::string>()});
    }
    j.at("final_value").get_to(t.final_value);
}

void to_json(Json& j, const Trajectory& t) {
    Json blocks = Json::array();
    for (const auto& b : t.blocks) blocks.push_back(Json{{"tag", std::string(to_string(b.tag))}, {"text", b.text}});
    j = Json{{"instance_id", t.instance_id}, {"blocks", std::move(blocks)}};
}

void from_json(const Json& j, Trajectory& t) {
    j.at("instance_id").get_to(t.instance_id);
    t.blocks.clear();
    for (const auto& b : j.at("blocks")) {
        auto tag = block_tag_from_string(b.at("tag").get<std::string>());
        if (!tag) throw RecordError("unknown block tag " + b.at("tag").dump(), t.instance_id);
        t.blocks.push_back({*tag, b.at("text").get<std::string>()});
    }
}

void to_json(Json& j, const TaskInstance& t) {
    j = Json{{"id", t.id},
             {"program", t.program},
             {"task_kind", std::string(to_string(t.task_kind))},
             {"condition", t.condition},
             {"target", t.target},
             {"gt_input", t.gt_input}};
}

void from_json(const Json& j, TaskInstance& t) {
    j.at("id").get_to(t.id);
    j.at("program").get_to(t.program);
    t.task_kind = task_kind_from_string(j.at("task_kind").get<std::string>());
    j.at("condition").get_to(t.condition);
    j.at("target").get_to(t.target);
    j.at("gt_input").get_to(t.gt_input);
}

std::vector<Json> read_jsonl(std::istream& in) {
    std::vector<Json> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(Json::parse(line));
        } catch (const nlohmann::json::parse_error& e) {
            throw RecordError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
        }
    }
    return out;
}

std::vector<Json> read_jsonl_file(const std::string& path) {
    if (path == "-") return read_jsonl(std::cin);
    std::ifstream in(path);
    if (!in) throw RecordError("cannot open " + path);
    return read_jsonl(in);
}

void write_jsonl_line(std::ostream& out, const Json& record) {
    out << record.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
}

}  // namespace trace_forge
