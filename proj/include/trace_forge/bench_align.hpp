#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trace_forge/core_model.hpp"
#include "trace_forge/records.hpp"

namespace trace_forge {

enum class BenchTask { CCP, PSP, EPP, OP };

std::string_view to_string(BenchTask task);
BenchTask bench_task_from_string(std::string_view text);

/// A line-based benchmark query against one program.
struct LineQuery {
    std::string program_id;
    BenchTask task = BenchTask::OP;
    std::optional<int> line;  // 1-based original line; absent for OP
    std::string payload;

    bool operator==(const LineQuery&) const = default;
};

void to_json(Json& j, const LineQuery& q);
void from_json(const Json& j, LineQuery& q);

/// Moves `query.line` into instrumented coordinates. OP queries pass through.
/// Throws LineOutOfRange (index 0) or std::invalid_argument for a line query
/// without a line.
LineQuery align(const LineQuery& query, const LineMap& map);

/// Elementwise align; the first out-of-range query aborts with its index.
std::vector<LineQuery> align_file(const std::vector<LineQuery>& queries, const LineMap& map);

}  // namespace trace_forge
