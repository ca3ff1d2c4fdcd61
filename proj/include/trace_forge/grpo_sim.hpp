#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "trace_forge/advantage_engine.hpp"
#include "trace_forge/records.hpp"

namespace trace_forge::sim {

struct SyntheticEnv {
    std::size_t n_anchors = 1;
    std::size_t vocab = 2;
    std::vector<std::size_t> correct_path;
    /// Terminal reward needs every anchor right; otherwise only the last.
    bool answer_depends_on_trace = false;

    /// Throws std::invalid_argument on a broken invariant.
    void validate() const;
};

/// vocab 8, six anchors, answer depends on the whole trace.
SyntheticEnv hard_env();

/// Softmax policy with one logit row per (anchor, number of correct
/// choices so far).
class TabularPolicy {
public:
    TabularPolicy() = default;
    /// Uniform policy; the reference is a frozen copy.
    explicit TabularPolicy(const SyntheticEnv& env);

    std::size_t n() const noexcept { return n_; }
    std::size_t vocab() const noexcept { return vocab_; }
    std::size_t state_count() const noexcept { return n_ * (n_ + 1); }
    std::size_t state(std::size_t anchor, std::size_t correct_so_far) const { return anchor * (n_ + 1) + correct_so_far; }

    std::vector<double>& logits() noexcept { return logits_; }
    const std::vector<double>& logits() const noexcept { return logits_; }
    std::vector<double>& reference_logits() noexcept { return reference_; }
    const std::vector<double>& reference_logits() const noexcept { return reference_; }

    /// Log-softmax of one state's row.
    std::vector<double> log_probs(std::size_t state) const { return log_softmax(logits_, state); }
    std::vector<double> ref_log_probs(std::size_t state) const { return log_softmax(reference_, state); }

    /// Throws NonFinite if any logit is NaN or infinite.
    void check_finite(std::size_t step) const;

    bool operator==(const TabularPolicy&) const = default;

private:
    std::vector<double> log_softmax(const std::vector<double>& table, std::size_t state) const;

    std::size_t n_ = 0;
    std::size_t vocab_ = 0;
    std::vector<double> logits_;
    std::vector<double> reference_;
};

struct Rollout {
    GroupRewards rewards;
    /// G x n choices and visited states.
    std::vector<std::vector<std::size_t>> choices;
    std::vector<std::vector<std::size_t>> states;
    Matrix logp;
    Matrix logp_ref;
};

/// Samples G trajectories. Throws GroupTooSmall for G < 2.
Rollout rollout(const TabularPolicy& policy, const SyntheticEnv& env, std::size_t G, std::uint64_t seed);

/// Exact KL(policy || reference) over whole trajectories.
double exact_kl(const TabularPolicy& policy, const SyntheticEnv& env);

/// Exact expectations under the policy.
struct PolicyMetrics {
    double expected_final_reward = 0.0;
    double stepwise_accuracy = 0.0;
    /// Expected length of the leading run of correct anchors.
    double mean_traj_length = 0.0;
    double kl = 0.0;
};
PolicyMetrics evaluate(const TabularPolicy& policy, const SyntheticEnv& env);

enum class Method { terminal, step_group, bilevel };
std::string_view to_string(Method m);
Method method_from_string(std::string_view text);

struct TrainConfig {
    Method method = Method::bilevel;
    std::size_t steps = 1500;
    std::size_t group = 5;
    double lr = 0.05;
    double lambda = kDefaultLambda;
    double kl_coef = 0.002;
    double epsilon = kDefaultEpsilon;
    std::uint64_t seed = 1;
};

/// Surrogate objective minimized by training:
/// l_step + l_final + kl_coef * KL, with l_step absent for `terminal` and
/// lambda forced to 0 for `step_group`.
struct Objective {
    double value = 0.0;
    SurrogateLosses parts;
    std::vector<double> gradient;  // d value / d logits
};

/// Evaluates the objective at `policy` for a batch sampled from `old`.
Objective objective(const TabularPolicy& policy, const TabularPolicy& old, const SyntheticEnv& env,
                    const Rollout& batch, const TrainConfig& cfg);

struct CurvePoint {
    std::size_t step = 0;
    double expected_final_reward = 0.0;
    double stepwise_accuracy = 0.0;
    double mean_traj_length = 0.0;
    double kl = 0.0;
    double batch_final_reward = 0.0;
};

struct TrainResult {
    std::vector<CurvePoint> curve;  // entry 0 is the initial policy
    TabularPolicy policy;
};

/// Throws NonFinite naming the step whose update broke the logits.
TrainResult train(const SyntheticEnv& env, const TrainConfig& cfg);

/// Trailing moving average over `window` points.
std::vector<double> moving_average(const std::vector<double>& values, std::size_t window);

/// Writes curves.csv (raw and smoothed columns), curves.svg and
/// metadata.json under `out_dir`. `metadata` is extended with the smoothing
/// window and axis ranges. Throws std::runtime_error on IO failure.
void plot_curves(const std::vector<CurvePoint>& curve, const std::string& out_dir, std::size_t window,
                 Json metadata = Json::object());

}  // namespace trace_forge::sim
