#include "trace_forge/grpo_sim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "trace_forge/errors.hpp"

namespace trace_forge::sim {
namespace {

SyntheticEnv random_env(std::mt19937_64& rng, std::size_t max_n = 3, std::size_t max_vocab = 4) {
    SyntheticEnv env;
    env.n_anchors = 1 + rng() % max_n;
    env.vocab = 2 + rng() % (max_vocab - 1);
    for (std::size_t i = 0; i < env.n_anchors; ++i) env.correct_path.push_back(rng() % env.vocab);
    env.answer_depends_on_trace = rng() % 2;
    return env;
}

void randomize(std::vector<double>& v, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> d(0.0, scale);
    for (auto& x : v) x = d(rng);
}

// Every choice sequence with its probability under the policy and reference.
struct Path {
    std::vector<std::size_t> choices;
    double logp = 0.0;
    double logp_ref = 0.0;
    std::size_t correct = 0;
};

std::vector<Path> enumerate(const TabularPolicy& pol, const SyntheticEnv& env) {
    std::vector<Path> paths{Path{}};
    for (std::size_t i = 0; i < env.n_anchors; ++i) {
        std::vector<Path> next;
        for (const auto& p : paths) {
            const std::size_t s = pol.state(i, p.correct);
            for (std::size_t b = 0; b < env.vocab; ++b) {
                Path q = p;
                q.choices.push_back(b);
                q.logp += pol.log_probs(s)[b];
                q.logp_ref += pol.ref_log_probs(s)[b];
                q.correct += b == env.correct_path[i];
                next.push_back(q);
            }
        }
        paths = std::move(next);
    }
    return paths;
}

TEST(SyntheticEnv, Validation) {
    EXPECT_NO_THROW(hard_env().validate());
    EXPECT_THROW((SyntheticEnv{1, 1, {0}, false}).validate(), std::invalid_argument);
    EXPECT_THROW((SyntheticEnv{2, 3, {0, 3}, false}).validate(), std::invalid_argument);
    EXPECT_THROW((SyntheticEnv{2, 3, {0}, false}).validate(), std::invalid_argument);
    const auto h = hard_env();
    EXPECT_EQ(h.vocab, 8u);
    EXPECT_EQ(h.n_anchors, 6u);
    EXPECT_TRUE(h.answer_depends_on_trace);
}

TEST(Rollout, PolicyOnCorrectPathEarnsEverything) {
    const SyntheticEnv env{4, 5, {1, 0, 4, 2}, true};
    TabularPolicy pol(env);
    for (std::size_t i = 0; i < env.n_anchors; ++i) {
        for (std::size_t c = 0; c <= i; ++c) pol.logits()[pol.state(i, c) * env.vocab + env.correct_path[i]] = 60.0;
    }
    const auto r = rollout(pol, env, 8, 3);
    for (double v : r.rewards.step.data()) EXPECT_EQ(v, 1.0);
    for (double v : r.rewards.final) EXPECT_EQ(v, 1.0);
}

TEST(Rollout, UniformPolicyMatchesBinomialMean) {
    const SyntheticEnv env{3, 4, {0, 1, 2}, false};
    const TabularPolicy pol(env);
    const std::size_t G = 10000;
    const auto r = rollout(pol, env, G, 17);
    const double sigma = std::sqrt(0.25 * 0.75 / G);
    for (std::size_t i = 0; i < env.n_anchors; ++i) {
        double mean = 0.0;
        for (std::size_t g = 0; g < G; ++g) mean += r.rewards.step(g, i);
        mean /= G;
        EXPECT_NEAR(mean, 0.25, 3 * sigma) << i;
    }
    for (std::size_t g = 0; g < 50; ++g) EXPECT_NEAR(r.logp(g, 0), std::log(0.25), 1e-12);
}

TEST(Rollout, SeedDeterminesBatch) {
    const auto env = hard_env();
    const TabularPolicy pol(env);
    const auto a = rollout(pol, env, 5, 9);
    const auto b = rollout(pol, env, 5, 9);
    EXPECT_EQ(a.choices, b.choices);
    EXPECT_EQ(a.rewards.step, b.rewards.step);
    EXPECT_EQ(a.logp, b.logp);
    EXPECT_NE(a.choices, rollout(pol, env, 5, 10).choices);
    EXPECT_THROW(rollout(pol, env, 1, 9), GroupTooSmall);
}

TEST(ExactKl, MatchesEnumerationAndIsNonNegative) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const auto env = random_env(rng);
        TabularPolicy pol(env);
        EXPECT_EQ(exact_kl(pol, env), 0.0);
        randomize(pol.logits(), rng, 1.0);
        randomize(pol.reference_logits(), rng, 1.0);
        double brute = 0.0;
        for (const auto& p : enumerate(pol, env)) brute += std::exp(p.logp) * (p.logp - p.logp_ref);
        const double kl = exact_kl(pol, env);
        EXPECT_NEAR(kl, brute, 1e-12);
        EXPECT_GT(kl, 0.0);
    }
}

TEST(Evaluate, MatchesEnumeration) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        const auto env = random_env(rng);
        TabularPolicy pol(env);
        randomize(pol.logits(), rng, 1.5);
        double fin = 0.0, acc = 0.0, lead = 0.0;
        for (const auto& p : enumerate(pol, env)) {
            const double w = std::exp(p.logp);
            const std::size_t n = env.n_anchors;
            std::size_t run = 0;
            while (run < n && p.choices[run] == env.correct_path[run]) ++run;
            const bool win = env.answer_depends_on_trace ? p.correct == n : p.choices[n - 1] == env.correct_path[n - 1];
            fin += w * win;
            acc += w * static_cast<double>(p.correct) / static_cast<double>(n);
            lead += w * static_cast<double>(run);
        }
        const auto m = evaluate(pol, env);
        EXPECT_NEAR(m.expected_final_reward, fin, 1e-12);
        EXPECT_NEAR(m.stepwise_accuracy, acc, 1e-12);
        EXPECT_NEAR(m.mean_traj_length, lead, 1e-12);
    }
}

double relative_gradient_error(Method method, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto env = random_env(rng, 4, 4);
    TabularPolicy old(env);
    randomize(old.logits(), rng, 0.7);
    randomize(old.reference_logits(), rng, 0.7);
    TabularPolicy pol = old;
    randomize(pol.logits(), rng, 0.7);
    const auto batch = rollout(old, env, 2 + rng() % 5, rng());
    TrainConfig cfg;
    cfg.method = method;
    cfg.kl_coef = 0.3;
    const auto analytic = objective(pol, old, env, batch, cfg).gradient;
    const double h = 1e-5;
    double diff = 0.0, norm_a = 0.0, norm_fd = 0.0;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
        TabularPolicy plus = pol, minus = pol;
        plus.logits()[k] += h;
        minus.logits()[k] -= h;
        const double fd = (objective(plus, old, env, batch, cfg).value - objective(minus, old, env, batch, cfg).value) / (2 * h);
        diff += (fd - analytic[k]) * (fd - analytic[k]);
        norm_a += analytic[k] * analytic[k];
        norm_fd += fd * fd;
    }
    const double scale = std::max(std::sqrt(norm_a), std::sqrt(norm_fd));
    return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

TEST(Objective, GradientMatchesCentralDifferences) {
    for (auto m : {Method::terminal, Method::step_group, Method::bilevel}) {
        for (std::uint64_t seed = 1; seed <= 30; ++seed) {
            EXPECT_LT(relative_gradient_error(m, seed), 1e-5) << to_string(m) << " seed " << seed;
        }
    }
}

TEST(Objective, OnPolicyRatiosAreOne) {
    const auto env = hard_env();
    const TabularPolicy pol(env);
    const auto batch = rollout(pol, env, 5, 2);
    TrainConfig cfg;
    const auto obj = objective(pol, pol, env, batch, cfg);
    EXPECT_EQ(obj.parts.kl, 0.0);
    // all-zero final rewards on the uniform hard env: terminal term vanishes
    EXPECT_EQ(obj.parts.l_final, 0.0);
}

TEST(Train, LambdaZeroBilevelEqualsStepGroup) {
    for (std::uint64_t seed : {1, 2, 3}) {
        for (const auto& env : {hard_env(), SyntheticEnv{3, 3, {2, 0, 1}, false}}) {
            TrainConfig a;
            a.method = Method::bilevel;
            a.lambda = 0.0;
            a.steps = 200;
            a.seed = seed;
            TrainConfig b = a;
            b.method = Method::step_group;
            b.lambda = 0.3;  // ignored by step_group
            const auto ra = train(env, a);
            const auto rb = train(env, b);
            ASSERT_EQ(ra.curve.size(), rb.curve.size());
            for (std::size_t t = 0; t < ra.curve.size(); ++t) {
                EXPECT_EQ(ra.curve[t].expected_final_reward, rb.curve[t].expected_final_reward);
                EXPECT_EQ(ra.curve[t].stepwise_accuracy, rb.curve[t].stepwise_accuracy);
                EXPECT_EQ(ra.curve[t].batch_final_reward, rb.curve[t].batch_final_reward);
            }
            EXPECT_EQ(ra.policy, rb.policy);
        }
    }
}

TEST(Train, SingleAnchorEnvConvergesForAllMethods) {
    const SyntheticEnv env{1, 4, {2}, false};
    for (auto m : {Method::terminal, Method::step_group, Method::bilevel}) {
        TrainConfig cfg;
        cfg.method = m;
        const auto r = train(env, cfg);
        EXPECT_GE(r.curve.back().expected_final_reward, 0.95) << to_string(m);
        EXPECT_EQ(r.curve.size(), cfg.steps + 1);
    }
}

TEST(Train, HardEnvOrdering) {
    double acc[3] = {0, 0, 0};
    const Method methods[3] = {Method::terminal, Method::step_group, Method::bilevel};
    for (int k = 0; k < 3; ++k) {
        for (std::uint64_t seed : {1, 2, 3}) {
            TrainConfig cfg;
            cfg.method = methods[k];
            cfg.seed = seed;
            acc[k] += train(hard_env(), cfg).curve.back().stepwise_accuracy / 3.0;
        }
    }
    EXPECT_GE(acc[2], acc[1]);
    EXPECT_GE(acc[1], acc[0]);
}

TEST(Train, NonFiniteNamesStep) {
    TrainConfig cfg;
    cfg.lr = std::numeric_limits<double>::infinity();
    cfg.steps = 5;
    try {
        train(SyntheticEnv{2, 3, {0, 1}, false}, cfg);
        FAIL();
    } catch (const NonFinite& e) {
        EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos) << e.what();
    }
    cfg.steps = 0;
    EXPECT_THROW(train(hard_env(), cfg), std::invalid_argument);
}

TEST(Curves, MovingAverage) {
    const std::vector<double> v{1, 2, 3, 4, 5};
    EXPECT_EQ(moving_average(v, 1), v);
    const auto m = moving_average(v, 3);
    const std::vector<double> expect{1.0, 1.5, 2.0, 3.0, 4.0};
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_DOUBLE_EQ(m[i], expect[i]);
    EXPECT_THROW(moving_average(v, 0), std::invalid_argument);
}

TEST(Curves, PlotWritesFiles) {
    const auto dir = (std::filesystem::temp_directory_path() / "tf_sim_plot").string();
    std::filesystem::remove_all(dir);
    std::vector<CurvePoint> flat;
    for (std::size_t t = 0; t < 10; ++t) flat.push_back({t, 0.5, 0.5, 1.0, 0.0, 0.5});
    plot_curves(flat, dir, 4, Json{{"method", "bilevel"}});
    for (const char* f : {"curves.csv", "curves.svg", "metadata.json"}) {
        EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(dir) / f)) << f;
    }
    std::ifstream meta(std::filesystem::path(dir) / "metadata.json");
    const auto j = Json::parse(meta);
    EXPECT_EQ(j.at("smoothing_window"), 4);
    EXPECT_EQ(j.at("method"), "bilevel");
    std::ifstream csv(std::filesystem::path(dir) / "curves.csv");
    std::string header, row;
    std::getline(csv, header);
    std::size_t rows = 0;
    while (std::getline(csv, row)) {
        ++rows;
        EXPECT_EQ(row.substr(row.find(',') + 1, 7), "0.5,0.5");
    }
    EXPECT_EQ(rows, 10u);
}

}  // namespace
}  // namespace trace_forge::sim
