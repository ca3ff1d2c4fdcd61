#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "trace_forge/core_model.hpp"

namespace trace_forge {

/// A parsed response. `malformed` holds the shape violation when the tags
/// balance but the block sequence does not fit the task; such responses
/// score zero.
struct ParsedResponse {
    Trajectory trajectory;
    std::optional<std::string> malformed;

    bool ok() const noexcept { return !malformed.has_value(); }
};

/// Extracts <reasoning>, <print>, <input> and <answer> blocks in textual
/// order (case-sensitive, non-nested, first closing tag wins; text outside
/// tags is ignored; payloads trimmed at both ends) and validates the shape
/// for `kind`. Throws UnbalancedTags.
ParsedResponse parse_response(std::string_view text, TaskKind kind, std::string instance_id = {});

/// Throws ShapeError when `t` does not fit the block sequence of `kind`.
void validate_shape(const Trajectory& t, TaskKind kind);

/// Output shape, or input shape when the trajectory commits an input.
bool is_well_shaped(const Trajectory& t);

/// Tagged supervision skeleton for a trace: empty reasoning placeholders,
/// one print per event, the committed input for input tasks, then the
/// answer.
std::string serialize_target(const ExecutionTrace& trace, std::string_view target, TaskKind kind,
                             std::string_view gt_input = {});

struct PrintPair {
    std::string name;
    std::string value;
    bool well_formed = false;

    bool operator==(const PrintPair&) const = default;
};

/// Splits each print payload at the first ": " (a trailing ":" stands for an
/// empty value). Payloads without the separator, or with a name that is not
/// an identifier, are ill-formed.
std::vector<PrintPair> extract_print_pairs(const Trajectory& t);

}  // namespace trace_forge
