#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "trace_forge/core_model.hpp"
#include "trace_forge/executor.hpp"

namespace trace_forge {

struct PipelineConfig {
    std::size_t max_trace_lines = 10;
    std::size_t ngram_k = 10;
    double dropout_rate = 0.0;
    std::uint64_t seed = 0;
    std::size_t max_static_anchors = 10;
    /// Threads for the instrument-and-trace stage.
    std::size_t workers = 1;
};

/// One concrete input for a program.
struct ProgramInput {
    std::string program_id;
    std::string input;
    TaskKind task_kind = TaskKind::output_prediction;
};

struct DatasetSample {
    TaskInstance instance;
    ExecutionTrace trace;
    /// Tagged supervision sequence for fine-tuning.
    std::string target_text;
};

struct Rejection {
    std::string id;
    std::string reason;
    std::string detail;

    bool operator==(const Rejection&) const = default;
};

struct PipelineOutput {
    std::vector<DatasetSample> sft_set;
    std::vector<DatasetSample> rl_set;
    std::vector<DatasetSample> terminal_only_set;
    std::vector<Rejection> rejected;
};

/// Lowercased maximal runs of letters, digits, '_' and non-ASCII bytes.
std::vector<std::string> ngram_tokens(std::string_view text);

struct DecontaminationResult {
    std::vector<SourceProgram> kept;
    /// Removed programs with a witnessing k-gram (tokens joined by spaces).
    std::vector<std::pair<SourceProgram, std::string>> removed;
};

/// Removes every sample sharing at least one k-gram with any benchmark text.
DecontaminationResult decontaminate(const std::vector<SourceProgram>& samples,
                                    const std::vector<std::string>& benchmark_corpus, std::size_t k);

/// Gives `train_<index>` ids to programs without one.
void assign_missing_ids(std::vector<SourceProgram>& programs);

/// Decontaminate, instrument, trace and route. Each (program, input) pair
/// becomes one sample, identified by the program id, or `id#k` when the
/// program has several inputs. Every sample lands in exactly one of
/// sft/rl (both), terminal_only or rejected.
PipelineOutput build(const std::vector<SourceProgram>& programs, const std::vector<ProgramInput>& inputs,
                     const std::vector<std::string>& benchmark_corpus, const PipelineConfig& cfg, Executor& executor);

struct AnchorStats {
    double mean = 0.0;
    double median = 0.0;
    std::size_t min = 0;
    std::size_t max = 0;

    bool operator==(const AnchorStats&) const = default;
};

/// Statistics of runtime anchor counts. Throws EmptySet.
AnchorStats anchor_stats(const std::vector<std::size_t>& counts);
AnchorStats anchor_stats(const std::vector<DatasetSample>& samples);

}  // namespace trace_forge
