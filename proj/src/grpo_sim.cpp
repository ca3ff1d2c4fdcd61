#include "trace_forge/grpo_sim.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "trace_forge/errors.hpp"

namespace trace_forge::sim {
namespace {

struct Dp {
    // reach[i][c]: probability of arriving at anchor i with c correct so far.
    std::vector<std::vector<double>> reach;
    // value[i][c]: KL accumulated from anchor i onwards.
    std::vector<std::vector<double>> value;
};

std::size_t next_correct(const SyntheticEnv& env, std::size_t i, std::size_t c, std::size_t b) {
    return c + (b == env.correct_path[i] ? 1 : 0);
}

Dp run_dp(const TabularPolicy& policy, const SyntheticEnv& env) {
    const std::size_t n = env.n_anchors;
    Dp dp;
    dp.reach.assign(n + 1, std::vector<double>(n + 1, 0.0));
    dp.value.assign(n + 1, std::vector<double>(n + 1, 0.0));
    dp.reach[0][0] = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c <= i; ++c) {
            const double p_right = std::exp(policy.log_probs(policy.state(i, c))[env.correct_path[i]]);
            dp.reach[i + 1][c + 1] += dp.reach[i][c] * p_right;
            dp.reach[i + 1][c] += dp.reach[i][c] * (1.0 - p_right);
        }
    }
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t c = 0; c <= i; ++c) {
            const auto lp = policy.log_probs(policy.state(i, c));
            const auto lr = policy.ref_log_probs(policy.state(i, c));
            double v = 0.0;
            for (std::size_t b = 0; b < env.vocab; ++b) {
                v += std::exp(lp[b]) * (lp[b] - lr[b] + dp.value[i + 1][next_correct(env, i, c, b)]);
            }
            dp.value[i][c] = v;
        }
    }
    return dp;
}

// Adds coef * d log pi(a|s) / d logits[s, .] to grad.
void add_score(std::vector<double>& grad, const TabularPolicy& policy, std::size_t s, std::size_t a, double coef) {
    const auto lp = policy.log_probs(s);
    const std::size_t base = s * policy.vocab();
    for (std::size_t b = 0; b < policy.vocab(); ++b) {
        grad[base + b] += coef * ((b == a ? 1.0 : 0.0) - std::exp(lp[b]));
    }
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(10);
    ss << v;
    return ss.str();
}

}  // namespace

void SyntheticEnv::validate() const {
    if (vocab < 2) throw std::invalid_argument("vocab must be >= 2");
    if (n_anchors < 1) throw std::invalid_argument("n_anchors must be >= 1");
    if (correct_path.size() != n_anchors) throw std::invalid_argument("correct_path length must equal n_anchors");
    for (auto c : correct_path) {
        if (c >= vocab) throw std::invalid_argument("correct_path entry out of range");
    }
}

SyntheticEnv hard_env() { return SyntheticEnv{6, 8, {3, 1, 4, 1, 5, 2}, true}; }

TabularPolicy::TabularPolicy(const SyntheticEnv& env) : n_(env.n_anchors), vocab_(env.vocab) {
    env.validate();
    logits_.assign(state_count() * vocab_, 0.0);
    reference_ = logits_;
}

std::vector<double> TabularPolicy::log_softmax(const std::vector<double>& table, std::size_t state) const {
    const auto first = table.begin() + static_cast<std::ptrdiff_t>(state * vocab_);
    std::vector<double> out(first, first + static_cast<std::ptrdiff_t>(vocab_));
    const double m = *std::max_element(out.begin(), out.end());
    double z = 0.0;
    for (double v : out) z += std::exp(v - m);
    const double lse = m + std::log(z);
    for (double& v : out) v -= lse;
    return out;
}

void TabularPolicy::check_finite(std::size_t step) const {
    for (double v : logits_) {
        if (!std::isfinite(v)) throw NonFinite("policy logits became non-finite at step " + std::to_string(step));
    }
}

Rollout rollout(const TabularPolicy& policy, const SyntheticEnv& env, std::size_t G, std::uint64_t seed) {
    if (G < 2) throw GroupTooSmall(G);
    env.validate();
    const std::size_t n = env.n_anchors;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Rollout r;
    r.rewards.step = Matrix(G, n);
    r.rewards.final.assign(G, 0.0);
    r.logp = Matrix(G, n);
    r.logp_ref = Matrix(G, n);
    r.choices.assign(G, std::vector<std::size_t>(n));
    r.states.assign(G, std::vector<std::size_t>(n));
    for (std::size_t g = 0; g < G; ++g) {
        std::size_t correct = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t s = policy.state(i, correct);
            const auto lp = policy.log_probs(s);
            const double u = unit(rng);
            std::size_t a = env.vocab - 1;
            double cdf = 0.0;
            for (std::size_t b = 0; b < env.vocab; ++b) {
                cdf += std::exp(lp[b]);
                if (u < cdf) {
                    a = b;
                    break;
                }
            }
            const bool right = a == env.correct_path[i];
            r.states[g][i] = s;
            r.choices[g][i] = a;
            r.rewards.step(g, i) = right ? 1.0 : 0.0;
            r.logp(g, i) = lp[a];
            r.logp_ref(g, i) = policy.ref_log_probs(s)[a];
            correct += right ? 1 : 0;
        }
        const bool win = env.answer_depends_on_trace ? correct == n : r.rewards.step(g, n - 1) == 1.0;
        r.rewards.final[g] = win ? 1.0 : 0.0;
    }
    return r;
}

double exact_kl(const TabularPolicy& policy, const SyntheticEnv& env) { return run_dp(policy, env).value[0][0]; }

PolicyMetrics evaluate(const TabularPolicy& policy, const SyntheticEnv& env) {
    const std::size_t n = env.n_anchors;
    const Dp dp = run_dp(policy, env);
    PolicyMetrics m;
    double last_right = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double p_i = 0.0;
        for (std::size_t c = 0; c <= i; ++c) {
            p_i += dp.reach[i][c] * std::exp(policy.log_probs(policy.state(i, c))[env.correct_path[i]]);
        }
        m.stepwise_accuracy += p_i;
        last_right = p_i;
        m.mean_traj_length += dp.reach[i + 1][i + 1];
    }
    m.stepwise_accuracy /= static_cast<double>(n);
    m.expected_final_reward = env.answer_depends_on_trace ? dp.reach[n][n] : last_right;
    m.kl = std::max(0.0, dp.value[0][0]);
    return m;
}

std::string_view to_string(Method m) {
    switch (m) {
        case Method::terminal: return "terminal";
        case Method::step_group: return "step_group";
        case Method::bilevel: return "bilevel";
    }
    return "bilevel";
}

Method method_from_string(std::string_view text) {
    if (text == "terminal") return Method::terminal;
    if (text == "step_group" || text == "step") return Method::step_group;
    if (text == "bilevel") return Method::bilevel;
    throw std::invalid_argument("unknown method: " + std::string(text));
}

Objective objective(const TabularPolicy& policy, const TabularPolicy& old, const SyntheticEnv& env,
                    const Rollout& batch, const TrainConfig& cfg) {
    const std::size_t G = batch.rewards.G();
    const std::size_t n = batch.rewards.n();
    AdvantageMatrix adv;
    if (cfg.method == Method::step_group) {
        adv.group = group_advantage(batch.rewards, cfg.epsilon);
        adv.intra = Matrix(G, n);
        adv.combined = adv.group;
        adv.final = final_advantage(batch.rewards.final, cfg.epsilon);
    } else {
        adv = compute_advantages(batch.rewards, cfg.lambda, cfg.epsilon);
    }
    if (cfg.method == Method::terminal) adv.combined = Matrix(G, n);

    PolicyLogProbs lp;
    lp.logp_new = Matrix(G, n);
    lp.logp_old = Matrix(G, n);
    lp.logp_ref = batch.logp_ref;
    for (std::size_t g = 0; g < G; ++g) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t s = batch.states[g][i];
            const std::size_t a = batch.choices[g][i];
            lp.logp_new(g, i) = policy.log_probs(s)[a];
            lp.logp_old(g, i) = old.log_probs(s)[a];
        }
    }
    const Dp dp = run_dp(policy, env);
    lp.exact_kl = dp.value[0][0];

    Objective out;
    out.parts = surrogate_losses(adv, lp);
    const double l_step = cfg.method == Method::terminal ? 0.0 : out.parts.l_step;
    out.value = l_step + out.parts.l_final + cfg.kl_coef * out.parts.kl;

    out.gradient.assign(policy.logits().size(), 0.0);
    const double inv_g = 1.0 / static_cast<double>(G);
    for (std::size_t g = 0; g < G; ++g) {
        double seq_log_ratio = 0.0;
        for (std::size_t i = 0; i < n; ++i) seq_log_ratio += lp.logp_new(g, i) - lp.logp_old(g, i);
        const double final_coef = -inv_g * std::exp(seq_log_ratio) * adv.final[g];
        for (std::size_t i = 0; i < n; ++i) {
            const double step_coef = -inv_g * std::exp(lp.logp_new(g, i) - lp.logp_old(g, i)) * adv.combined(g, i);
            add_score(out.gradient, policy, batch.states[g][i], batch.choices[g][i], step_coef + final_coef);
        }
    }
    if (cfg.kl_coef != 0.0) {
        for (std::size_t i = 0; i < env.n_anchors; ++i) {
            for (std::size_t c = 0; c <= i; ++c) {
                const std::size_t s = policy.state(i, c);
                const auto lpn = policy.log_probs(s);
                const auto lpr = policy.ref_log_probs(s);
                for (std::size_t b = 0; b < env.vocab; ++b) {
                    const double q = lpn[b] - lpr[b] + dp.value[i + 1][next_correct(env, i, c, b)];
                    out.gradient[s * env.vocab + b] +=
                        cfg.kl_coef * dp.reach[i][c] * std::exp(lpn[b]) * (q - dp.value[i][c]);
                }
            }
        }
    }
    return out;
}

TrainResult train(const SyntheticEnv& env, const TrainConfig& cfg) {
    if (cfg.steps < 1) throw std::invalid_argument("steps must be >= 1");
    env.validate();
    TrainResult result;
    result.policy = TabularPolicy(env);
    auto record = [&](std::size_t step, double batch_final) {
        const auto m = evaluate(result.policy, env);
        result.curve.push_back(
            {step, m.expected_final_reward, m.stepwise_accuracy, m.mean_traj_length, m.kl, batch_final});
    };
    record(0, 0.0);
    for (std::size_t t = 1; t <= cfg.steps; ++t) {
        const Rollout batch = rollout(result.policy, env, cfg.group, splitmix64(cfg.seed * 1000003ULL + t));
        const TabularPolicy old = result.policy;
        const Objective obj = objective(result.policy, old, env, batch, cfg);
        auto& logits = result.policy.logits();
        for (std::size_t k = 0; k < logits.size(); ++k) logits[k] -= cfg.lr * obj.gradient[k];
        result.policy.check_finite(t);
        double batch_final = 0.0;
        for (double f : batch.rewards.final) batch_final += f;
        record(t, batch_final / static_cast<double>(cfg.group));
    }
    return result;
}

std::vector<double> moving_average(const std::vector<double>& values, std::size_t window) {
    if (window < 1) throw std::invalid_argument("smoothing window must be >= 1");
    std::vector<double> out(values.size());
    double sum = 0.0;
    for (std::size_t t = 0; t < values.size(); ++t) {
        sum += values[t];
        if (t >= window) sum -= values[t - window];
        out[t] = sum / static_cast<double>(std::min(window, t + 1));
    }
    if (window == 1) return values;
    return out;
}

void plot_curves(const std::vector<CurvePoint>& curve, const std::string& out_dir, std::size_t window, Json metadata) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("cannot create " + out_dir + ": " + ec.message());

    std::vector<double> reward, acc, length, kl, batch;
    for (const auto& p : curve) {
        reward.push_back(p.expected_final_reward);
        acc.push_back(p.stepwise_accuracy);
        length.push_back(p.mean_traj_length);
        kl.push_back(p.kl);
        batch.push_back(p.batch_final_reward);
    }
    const auto reward_s = moving_average(reward, window);
    const auto acc_s = moving_average(acc, window);
    const auto length_s = moving_average(length, window);
    const auto batch_s = moving_average(batch, window);

    auto open = [&](const std::string& name) {
        std::ofstream out(fs::path(out_dir) / name, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + (fs::path(out_dir) / name).string());
        return out;
    };

    auto csv = open("curves.csv");
    csv << "step,expected_final_reward,expected_final_reward_smoothed,stepwise_accuracy,stepwise_accuracy_smoothed,"
           "mean_traj_length,mean_traj_length_smoothed,kl,batch_final_reward,batch_final_reward_smoothed\n";
    for (std::size_t t = 0; t < curve.size(); ++t) {
        csv << curve[t].step << ',' << fmt(reward[t]) << ',' << fmt(reward_s[t]) << ',' << fmt(acc[t]) << ','
            << fmt(acc_s[t]) << ',' << fmt(length[t]) << ',' << fmt(length_s[t]) << ',' << fmt(kl[t]) << ','
            << fmt(batch[t]) << ',' << fmt(batch_s[t]) << '\n';
    }
    if (!csv) throw std::runtime_error("write failed: curves.csv");

    double length_max = 1.0;
    for (double v : length) length_max = std::max(length_max, v);

    // Two stacked panels: rewards in [0, 1], length in [0, length_max].
    const double w = 640, h = 220, pad = 40;
    const double x_span = curve.size() > 1 ? static_cast<double>(curve.back().step) : 1.0;
    auto polyline = [&](const std::vector<double>& ys, double top, double y_max, const char* color, double opacity) {
        std::ostringstream s;
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-opacity=\"" << opacity << "\" points=\"";
        for (std::size_t t = 0; t < ys.size(); ++t) {
            const double x = pad + (w - 2 * pad) * static_cast<double>(curve[t].step) / x_span;
            const double y = top + h - pad - (h - 2 * pad) * ys[t] / y_max;
            s << fmt(x) << ',' << fmt(y) << ' ';
        }
        s << "\"/>\n";
        return s.str();
    };
    auto frame = [&](double top, const std::string& label, double y_max) {
        std::ostringstream s;
        s << "<rect x=\"" << pad << "\" y=\"" << top + pad << "\" width=\"" << w - 2 * pad << "\" height=\""
          << h - 2 * pad << "\" fill=\"none\" stroke=\"#888\"/>\n"
          << "<text x=\"" << pad << "\" y=\"" << top + pad - 8 << "\" font-size=\"12\">" << label << " (0 to "
          << fmt(y_max) << ")</text>\n";
        return s.str();
    };
    auto svg = open("curves.svg");
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << 2 * h << "\">\n";
    svg << frame(0, "reward: expected final (blue), stepwise accuracy (green)", 1.0);
    svg << polyline(reward, 0, 1.0, "#1f77b4", 0.3) << polyline(reward_s, 0, 1.0, "#1f77b4", 1.0);
    svg << polyline(acc, 0, 1.0, "#2ca02c", 0.3) << polyline(acc_s, 0, 1.0, "#2ca02c", 1.0);
    svg << frame(h, "mean trajectory length", length_max);
    svg << polyline(length, h, length_max, "#d62728", 0.3) << polyline(length_s, h, length_max, "#d62728", 1.0);
    svg << "</svg>\n";
    if (!svg) throw std::runtime_error("write failed: curves.svg");

    metadata["smoothing_window"] = window;
    metadata["smoothing"] = "trailing moving average";
    metadata["reward_axis"] = {0.0, 1.0};
    metadata["length_axis"] = {0.0, length_max};
    metadata["points"] = curve.size();
    auto meta = open("metadata.json");
    meta << metadata.dump(2) << '\n';
    if (!meta) throw std::runtime_error("write failed: metadata.json");
}

}  // namespace trace_forge::sim
