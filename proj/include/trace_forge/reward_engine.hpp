#pragma once

#include <vector>

#include "trace_forge/core_model.hpp"
#include "trace_forge/executor.hpp"
#include "trace_forge/response_codec.hpp"

namespace trace_forge {

enum class InputTraceMode { gt_input, committed_input };

struct RewardConfig {
    double r_internal_budget = 1.0;
    double r_final = 1.0;
    /// Which execution the anchors of an input-prediction response are
    /// checked against.
    InputTraceMode input_task_trace_mode = InputTraceMode::gt_input;
};

struct RewardVector {
    std::vector<int> step;  // one 0/1 entry per trace event
    int final = 0;
    double budgeted_total = 0.0;

    bool operator==(const RewardVector&) const = default;
};

/// (sum of step) / max(n, 1) * r_internal_budget + final * r_final.
double budgeted_total(const std::vector<int>& step, int final, const RewardConfig& cfg);

/// Positional anchor matching plus terminal value check. A trajectory whose
/// block sequence is malformed scores all zeros.
RewardVector score(const Trajectory& trajectory, const ExecutionTrace& trace, const RewardConfig& cfg,
                   Executor& executor);
RewardVector score(const ParsedResponse& response, const ExecutionTrace& trace, const RewardConfig& cfg,
                   Executor& executor);

/// Input-prediction scoring: the terminal reward checks that running the
/// program on the committed input reproduces the instance's expected output.
RewardVector score_input_task(const Trajectory& trajectory, const TaskInstance& instance, const RewardConfig& cfg,
                              Executor& executor);

}  // namespace trace_forge
