#include "trace_forge/reward_engine.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "trace_forge/errors.hpp"

namespace trace_forge {
namespace {

RewardVector zeros(std::size_t n, const RewardConfig& cfg) {
    RewardVector r;
    r.step.assign(n, 0);
    r.budgeted_total = budgeted_total(r.step, 0, cfg);
    return r;
}

std::vector<int> match_anchors(const Trajectory& t, const ExecutionTrace& trace) {
    const auto predicted = t.predicted_states();
    std::vector<int> step(trace.n(), 0);
    for (std::size_t i = 0; i < trace.n() && i < predicted.size(); ++i) {
        const auto& e = trace.events[i];
        step[i] = trim(predicted[i]) == trim(e.name + ": " + e.value) ? 1 : 0;
    }
    return step;
}

}  // namespace

double budgeted_total(const std::vector<int>& step, int final, const RewardConfig& cfg) {
    const double correct = std::accumulate(step.begin(), step.end(), 0.0);
    const double n = static_cast<double>(std::max<std::size_t>(step.size(), 1));
    return correct / n * cfg.r_internal_budget + final * cfg.r_final;
}

RewardVector score(const Trajectory& trajectory, const ExecutionTrace& trace, const RewardConfig& cfg,
                   Executor& executor) {
    if (!is_well_shaped(trajectory)) return zeros(trace.n(), cfg);
    RewardVector r;
    r.step = match_anchors(trajectory, trace);
    const auto answer = trajectory.answer();
    r.final = answer && executor.values_equal(*answer, trace.final_value) ? 1 : 0;
    r.budgeted_total = budgeted_total(r.step, r.final, cfg);
    return r;
}

RewardVector score(const ParsedResponse& response, const ExecutionTrace& trace, const RewardConfig& cfg,
                   Executor& executor) {
    if (!response.ok()) return zeros(trace.n(), cfg);
    return score(response.trajectory, trace, cfg, executor);
}

RewardVector score_input_task(const Trajectory& trajectory, const TaskInstance& instance, const RewardConfig& cfg,
                              Executor& executor) {
    if (instance.task_kind != TaskKind::input_prediction) {
        throw std::invalid_argument("score_input_task needs an input-prediction instance");
    }
    const ExecutionTrace gt = executor.generate_trace(instance.program, instance.gt_input);
    const auto committed = trajectory.committed_input();
    if (!committed) return zeros(gt.n(), cfg);
    try {
        validate_shape(trajectory, TaskKind::input_prediction);
    } catch (const ShapeError&) {
        return zeros(gt.n(), cfg);
    }

    std::optional<ExecutionTrace> run;
    try {
        run = executor.generate_trace(instance.program, *committed);
    } catch (const ExecutionFailed&) {
    } catch (const TraceParseError&) {
    }
    RewardVector r;
    r.final = run && executor.values_equal(run->final_value, instance.condition) ? 1 : 0;
    if (cfg.input_task_trace_mode == InputTraceMode::gt_input) {
        r.step = match_anchors(trajectory, gt);
    } else if (run) {
        r.step = match_anchors(trajectory, *run);
    } else {
        r.step.assign(gt.n(), 0);
    }
    r.budgeted_total = budgeted_total(r.step, r.final, cfg);
    return r;
}

}  // namespace trace_forge
