#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace trace_forge {

/// A subject program and the function under test.
struct SourceProgram {
    std::string id;
    std::string entry_name;
    std::string source_text;

    bool operator==(const SourceProgram&) const = default;
};

enum class AnchorKind { assignment, post_loop, return_val };

std::string_view to_string(AnchorKind kind);
AnchorKind anchor_kind_from_string(std::string_view text);

struct AnchorDecl {
    std::string name;
    int line = 0;  // 1-based, in the instrumented source
    AnchorKind kind = AnchorKind::assignment;

    bool operator==(const AnchorDecl&) const = default;
};

/// Original -> instrumented line mapping. Total over the original lines and
/// strictly increasing.
struct LineMap {
    std::vector<std::pair<int, int>> pairs;

    /// Instrumented line for `orig_line`, or nullopt when outside the map.
    std::optional<int> lookup(int orig_line) const;
    /// Checks totality (orig lines 1..k in order), strict monotonicity and
    /// that instrumentation only inserted lines.
    bool is_valid() const;
    /// Map taking original lines through `this` and then through `next`.
    LineMap then(const LineMap& next) const;
    static LineMap identity(int line_count);

    bool operator==(const LineMap&) const = default;
};

struct InstrumentedProgram {
    std::string origin_id;
    std::string entry_name;
    std::string source_text;
    std::vector<AnchorDecl> anchors;
    LineMap line_map;

    bool operator==(const InstrumentedProgram&) const = default;
};

enum class TaskKind { output_prediction, input_prediction };

std::string_view to_string(TaskKind kind);
/// Accepts "output"/"input" as well as the full enumerator names.
TaskKind task_kind_from_string(std::string_view text);

struct TraceEvent {
    std::string name;
    std::string value;

    bool operator==(const TraceEvent&) const = default;
};

struct ExecutionTrace {
    std::string origin_id;
    std::vector<TraceEvent> events;
    std::string final_value;

    std::size_t n() const noexcept { return events.size(); }
    bool operator==(const ExecutionTrace&) const = default;
};

struct TaskInstance {
    std::string id;
    InstrumentedProgram program;
    TaskKind task_kind = TaskKind::output_prediction;
    std::string condition;
    std::string target;
    std::string gt_input;

    bool operator==(const TaskInstance&) const = default;
};

enum class BlockTag { reasoning, print, input, answer };

std::string_view to_string(BlockTag tag);
std::optional<BlockTag> block_tag_from_string(std::string_view text);

struct Block {
    BlockTag tag = BlockTag::reasoning;
    std::string text;

    bool operator==(const Block&) const = default;
};

/// One parsed model response.
struct Trajectory {
    std::string instance_id;
    std::vector<Block> blocks;

    /// Print payloads in textual order.
    std::vector<std::string> predicted_states() const;
    std::optional<std::string> committed_input() const;
    /// Payload of the last Answer block, if any.
    std::optional<std::string> answer() const;

    bool operator==(const Trajectory&) const = default;
};

/// True when `name` matches `[A-Za-z_][A-Za-z0-9_]*`.
bool is_identifier(std::string_view name);

/// Strips ASCII whitespace at both ends.
std::string_view trim(std::string_view text);

}  // namespace trace_forge
