#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "trace_forge/core_model.hpp"
#include "trace_forge/records.hpp"

namespace trace_forge {

class ShimPool;

struct ExecutorConfig {
    std::size_t pool_size = 1;
    int timeout_ms = 5000;
    /// Recorded traces to replay instead of running a shim.
    std::optional<std::string> fixture_path;
    /// Shim command line; empty means resolve_shim_command().
    std::vector<std::string> shim_command;
};

/// Raw result of one shim `run`.
struct RunResult {
    std::string status;  // ok, timeout, exception, syntax_error
    std::vector<std::string> stdout_lines;
    std::string return_repr;
    std::string error_text;
};

/// Shim command line: $TRACE_FORGE_SHIM when set, otherwise
/// `trace_forge_shim.py` next to the running binary. A `.py` path is run
/// through python3. Returns empty when neither exists.
std::vector<std::string> resolve_shim_command();

/// Splits stdout lines into anchor events. Throws TraceParseError on a line
/// that is not `NAME: value`.
ExecutionTrace parse_trace_output(std::string origin_id, const std::vector<std::string>& stdout_lines,
                                  std::string final_value);

/// Key under which a run is stored in a fixture file.
std::string fixture_source_hash(std::string_view source_text);

class Executor {
public:
    explicit Executor(ExecutorConfig config = {});
    ~Executor();

    /// Runs `program` on `input_literal` and returns its anchor events and
    /// canonical return value. Throws ExecutionFailed or TraceParseError.
    ExecutionTrace generate_trace(const InstrumentedProgram& program, const std::string& input_literal);

    /// Runs an arbitrary program (fixture lookup first, then the shim).
    RunResult run(const std::string& origin_id, const std::string& source_text, const std::string& entry_name,
                  const std::string& input_literal);

    /// Canonical literal text, or nullopt when the literal cannot be
    /// canonicalized.
    std::optional<std::string> canonicalize(std::string_view literal);

    /// Equality of canonical forms; when either side fails to canonicalize,
    /// a str literal on one side is compared by content with the other side,
    /// and otherwise trimmed text is compared.
    bool values_equal(std::string_view a, std::string_view b);

    /// True iff both programs return equal values on every input.
    bool check_equivalence(const SourceProgram& original, const InstrumentedProgram& instrumented,
                           const std::vector<std::string>& inputs);

    /// Whether a live shim is configured.
    bool live() const noexcept { return pool_ != nullptr; }

    /// Fixture records captured from live runs when recording is on.
    void set_recording(bool on) { recording_ = on; }
    std::vector<Json> recorded_fixtures() const;

private:
    RunResult run_live(const std::string& source_text, const std::string& entry_name, const std::string& input_literal);

    ExecutorConfig config_;
    std::unique_ptr<ShimPool> pool_;
    std::map<std::pair<std::string, std::string>, RunResult> by_hash_;
    std::map<std::pair<std::string, std::string>, RunResult> by_origin_;
    bool recording_ = false;
    mutable std::mutex record_mu_;
    std::vector<Json> recorded_;
};

}  // namespace trace_forge
