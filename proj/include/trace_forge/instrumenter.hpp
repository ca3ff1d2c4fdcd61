#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "trace_forge/core_model.hpp"

namespace trace_forge {

struct InstrumentationConfig {
    std::size_t max_static_anchors = 10;
    bool unroll_oneliners = true;
    double dropout_rate = 0.0;
    std::uint64_t rng_seed = 0;
};

/// The anchor statement text for `name`, printing the value of `expr`:
/// `print(f'name: {expr}')`.
std::string anchor_statement(std::string_view name, std::string_view expr);

/// Inserts execution-trace anchors into the entry function of `program`.
///
/// Placement rules:
///   - nothing is inserted inside a `for`/`while` body at any depth;
///   - after a loop, one anchor per variable the loop assigns that was
///     already bound before the loop, in first-assignment order;
///   - after every statement-level assignment to a single simple name
///     outside loops (including inside `if`/`else` bodies);
///   - a `return_val` anchor right before each return outside loops. A
///     return of anything other than a simple name is rewritten to bind
///     `return_val` first. An assignment immediately followed by a return of
///     the same name gets only the `return_val` anchor.
///
/// Throws ParseError, UnsupportedConstruct or TooManyAnchors.
InstrumentedProgram instrument(const SourceProgram& program, const InstrumentationConfig& config = {});

std::size_t count_static_anchors(const InstrumentedProgram& program);

/// 64-bit FNV-1a, used to derive per-sample seeds and fixture keys.
std::uint64_t fnv1a64(std::string_view data);

}  // namespace trace_forge
