// Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../support/align_oracle.hpp"
#include "../support/synthetic_corpus.hpp"
#include "trace_forge/advantage_engine.hpp"
#include "trace_forge/bench_align.hpp"
#include "trace_forge/dataset_pipeline.hpp"
#include "trace_forge/executor.hpp"
#include "trace_forge/grpo_sim.hpp"
#include "trace_forge/instrumenter.hpp"
#include "trace_forge/response_codec.hpp"
#include "trace_forge/reward_engine.hpp"

using namespace trace_forge;

namespace {

std::string data_path(const std::string& name) { return std::string(TRACE_FORGE_TEST_DATA) + "/" + name; }

std::string read_data(const std::string& name) {
    std::ifstream in(data_path(name), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

// Collects failure reasons for one criterion.
struct Check {
    std::vector<std::string> failures;
    void expect(bool ok, const std::string& what) {
        if (!ok && failures.size() < 5) failures.push_back(what);
    }
};

using Clock = std::chrono::steady_clock;

bool report(const std::string& name, double budget_s, const std::function<void(Check&)>& body) {
    Check c;
    const auto t0 = Clock::now();
    try {
        body(c);
    } catch (const std::exception& e) {
        c.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (secs >= budget_s) {
        c.failures.push_back("runtime " + std::to_string(secs) + " s exceeds " + std::to_string(budget_s) + " s");
    }
    std::printf("%s %s (%.3f s)\n", c.failures.empty() ? "PASS" : "FAIL", name.c_str(), secs);
    for (const auto& f : c.failures) std::printf("    %s\n", f.c_str());
    std::fflush(stdout);
    return c.failures.empty();
}

void worked_cases(Check& c) {
    ExecutorConfig cfg;
    cfg.fixture_path = data_path("generate_output.fixture.jsonl");
    cfg.shim_command = {"/nonexistent-shim"};
    Executor ex(cfg);
    const auto program = instrument(SourceProgram{"train_12366", "generate_output", read_data("generate_output.py")});
    const auto trace = ex.generate_trace(program, read_data("generate_output.input.txt"));
    c.expect(trace.n() == 6, "trace has " + std::to_string(trace.n()) + " events, want 6");
    const double want[3] = {2.0, 1.5, 0.5};
    const double displayed[3] = {2.0, 1.48, 0.48};
    const std::vector<int> flags[3] = {{1, 1, 1, 1, 1, 1}, {1, 1, 1, 0, 0, 0}, {0, 1, 1, 0, 1, 0}};
    for (int k = 0; k < 3; ++k) {
        const auto parsed = parse_response(read_data("case" + std::to_string(k + 1) + ".txt"), TaskKind::output_prediction);
        const auto r = score(parsed, trace, RewardConfig{}, ex);
        const std::string tag = "case " + std::to_string(k + 1);
        c.expect(r.step == flags[k], tag + ": per-anchor flags differ");
        c.expect(std::abs(r.budgeted_total - want[k]) < 1e-12, tag + ": total " + std::to_string(r.budgeted_total));
        // displayed values are rounded to two decimals
        c.expect(std::abs(r.budgeted_total - displayed[k]) <= 0.02 + 1e-9, tag + ": too far from displayed total");
    }
}

// Direct evaluation of the advantage formulas.
struct BruteAdvantage {
    std::vector<std::vector<double>> group, intra, combined;
};

BruteAdvantage brute_force(const std::vector<std::vector<double>>& r, double lambda, double eps) {
    const std::size_t G = r.size(), n = r[0].size();
    BruteAdvantage b;
    b.group.assign(G, std::vector<double>(n));
    b.intra.assign(G, std::vector<double>(n));
    b.combined.assign(G, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        double mu = 0;
        for (std::size_t g = 0; g < G; ++g) mu += r[g][i];
        mu /= G;
        double var = 0;
        for (std::size_t g = 0; g < G; ++g) var += (r[g][i] - mu) * (r[g][i] - mu);
        const double sd = std::sqrt(var / G);
        for (std::size_t g = 0; g < G; ++g) b.group[g][i] = (r[g][i] - mu) / (sd + eps);
    }
    for (std::size_t g = 0; g < G; ++g) {
        for (std::size_t i = 0; i < n; ++i) {
            if (i + 1 == n) {
                b.intra[g][i] = r[g][i];
            } else {
                double later = 0;
                for (std::size_t j = i + 1; j < n; ++j) later += r[g][j];
                b.intra[g][i] = r[g][i] * (1.0 + later / static_cast<double>(n - i - 1));
            }
            b.combined[g][i] = b.group[g][i] + lambda * b.intra[g][i];
        }
    }
    return b;
}

void advantage_oracle(Check& c) {
    std::mt19937_64 rng(20240601);
    const double lambda = kDefaultLambda, eps = kDefaultEpsilon;
    std::size_t constant_columns = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t G = 2 + rng() % 7;
        const std::size_t n = 1 + rng() % 10;
        const double p = (rng() % 5) / 4.0;  // includes all-0 and all-1 groups
        std::bernoulli_distribution bit(p);
        std::vector<std::vector<double>> rows(G, std::vector<double>(n));
        std::vector<double> fin(G);
        for (auto& row : rows) {
            for (auto& v : row) v = bit(rng);
        }
        for (auto& f : fin) f = bit(rng);
        const auto adv = compute_advantages(GroupRewards{Matrix::from_rows(rows), fin}, lambda, eps);
        const auto ref = brute_force(rows, lambda, eps);
        for (std::size_t g = 0; g < G; ++g) {
            for (std::size_t i = 0; i < n; ++i) {
                const std::string at = "trial " + std::to_string(trial) + " (" + std::to_string(g) + "," + std::to_string(i) + ")";
                c.expect(std::abs(adv.group(g, i) - ref.group[g][i]) <= 1e-9, at + " group");
                c.expect(std::abs(adv.intra(g, i) - ref.intra[g][i]) <= 1e-9, at + " intra");
                c.expect(std::abs(adv.combined(g, i) - ref.combined[g][i]) <= 1e-9, at + " combined");
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            bool constant = true;
            for (std::size_t g = 1; g < G; ++g) constant &= rows[g][i] == rows[0][i];
            if (!constant) continue;
            ++constant_columns;
            for (std::size_t g = 0; g < G; ++g) c.expect(adv.group(g, i) == 0.0, "constant column not exactly zero");
        }
    }
    c.expect(constant_columns > 100, "too few constant columns generated");
}

void future_credit_ordering(Check& c) {
    std::mt19937_64 rng(77);
    std::size_t violations = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t G = 2 + rng() % 7;
        const std::size_t n = 2 + rng() % 9;
        const std::size_t i = rng() % (n - 1);  // leave at least one later anchor
        std::vector<std::vector<double>> rows(G, std::vector<double>(n));
        for (auto& row : rows) {
            for (auto& v : row) v = rng() % 2;
        }
        // trajectories 0 and 1 are both right at anchor i and differ in the future mean
        rows[0][i] = rows[1][i] = 1.0;
        double fa = 0, fb = 0;
        do {
            for (std::size_t j = i + 1; j < n; ++j) {
                rows[0][j] = rng() % 2;
                rows[1][j] = rng() % 2;
            }
            fa = fb = 0;
            for (std::size_t j = i + 1; j < n; ++j) {
                fa += rows[0][j];
                fb += rows[1][j];
            }
        } while (fa == fb);
        const std::size_t hi = fa > fb ? 0 : 1, lo = 1 - hi;
        const auto adv = compute_advantages(GroupRewards{Matrix::from_rows(rows), std::vector<double>(G, 0.0)}, 0.3);
        if (adv.group(hi, i) != adv.group(lo, i)) ++violations;  // same column entry by construction
        if (!(adv.combined(hi, i) > adv.combined(lo, i))) ++violations;
    }
    c.expect(violations == 0, std::to_string(violations) + " violations");
}

std::string random_value(std::mt19937_64& rng) {
    static const std::vector<std::string> pool{"a", "Z", "0", "7", "_", " ", ",", "'", "\"", "[", "]", "{", "}", ":",
                                               "|", "<", ">", "/", "\\", "-", "é", "λ", "中", "(", ")", "."};
    static const std::vector<std::string> tags{"<reasoning>", "</reasoning>", "<print>", "</print>",
                                               "<input>",     "</input>",     "<answer>", "</answer>"};
    for (;;) {
        std::string v;
        const std::size_t len = rng() % 20;
        for (std::size_t k = 0; k < len; ++k) v += pool[rng() % pool.size()];
        if (v.empty() || std::string(trim(v)) != v) continue;
        bool has_tag = false;
        for (const auto& t : tags) has_tag |= v.find(t) != std::string::npos;
        if (!has_tag) return v;
    }
}

void codec_round_trip(Check& c) {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 1000; ++trial) {
        ExecutionTrace t;
        t.origin_id = "rt_" + std::to_string(trial);
        const std::size_t n = rng() % 11;
        for (std::size_t i = 0; i < n; ++i) t.events.push_back({"v" + std::to_string(rng() % 5), random_value(rng)});
        t.final_value = random_value(rng);
        const TaskKind kind = rng() % 2 ? TaskKind::input_prediction : TaskKind::output_prediction;
        const std::string gt_input = random_value(rng);
        const std::string target = kind == TaskKind::input_prediction ? gt_input : t.final_value;
        const auto text = serialize_target(t, target, kind, gt_input);
        const auto parsed = parse_response(text, kind, t.origin_id);
        const std::string at = "trial " + std::to_string(trial);
        c.expect(parsed.ok(), at + ": shape rejected");
        const auto pairs = extract_print_pairs(parsed.trajectory);
        c.expect(pairs.size() == n, at + ": print count");
        for (std::size_t i = 0; i < std::min(n, pairs.size()); ++i) {
            c.expect(pairs[i].well_formed && pairs[i].name == t.events[i].name && pairs[i].value == t.events[i].value,
                     at + ": event " + std::to_string(i));
        }
        c.expect(parsed.trajectory.answer() == target, at + ": answer");
        if (kind == TaskKind::input_prediction) c.expect(parsed.trajectory.committed_input() == gt_input, at + ": input");
    }
    const std::string answers[3] = {"'6wrTqo|zCjWT|x1cUf|Xsdlqjcj|L6R7Gxk,Obqzevse'",
                                    "'6wrTqo|zCjWT|x1cUf|Xsdlqjcj|L6R7Gxk,Obqzevse'",
                                    "'6wrtqo|zCjWT|x1cUf|XSDLQJCJ|L6R7Gxk,Obqzevse'"};
    for (int k = 0; k < 3; ++k) {
        const auto parsed = parse_response(read_data("case" + std::to_string(k + 1) + ".txt"), TaskKind::output_prediction);
        c.expect(parsed.trajectory.predicted_states().size() == 6, "case " + std::to_string(k + 1) + ": print count");
        c.expect(parsed.trajectory.answer() == answers[k], "case " + std::to_string(k + 1) + ": answer");
    }
}

void pipeline_routing(Check& c) {
    const auto corpus = testing::make_synthetic_corpus(50, 2024, 17);
    const auto fixtures = (std::filesystem::temp_directory_path() / "tf_acceptance_corpus.jsonl").string();
    testing::write_fixtures(corpus, fixtures);
    std::size_t counts[4] = {0, 0, 0, 0};
    for (auto e : corpus.expected) ++counts[static_cast<int>(e)];
    c.expect(counts[1] > 0 && counts[2] > 0 && counts[3] == 1, "corpus lacks a routing class");

    auto run_once = [&] {
        ExecutorConfig ecfg;
        ecfg.fixture_path = fixtures;
        ecfg.shim_command = {"/nonexistent-shim"};
        Executor ex(ecfg);
        PipelineConfig cfg;
        cfg.max_static_anchors = 16;
        cfg.workers = 4;
        return build(corpus.programs, corpus.inputs, corpus.benchmark, cfg, ex);
    };
    auto dump = [](const PipelineOutput& o) {
        Json j = Json::array();
        for (const auto* set : {&o.sft_set, &o.rl_set, &o.terminal_only_set}) {
            Json part = Json::array();
            for (const auto& s : *set) part.push_back({s.instance, s.trace, s.target_text});
            j.push_back(part);
        }
        for (const auto& r : o.rejected) j.push_back({r.id, r.reason, r.detail});
        return j.dump();
    };
    const auto a = run_once();
    const auto b = run_once();
    c.expect(dump(a) == dump(b), "two runs differ");

    std::map<std::string, std::string> where;
    for (const auto& s : a.sft_set) where[s.instance.id] += "S";
    for (const auto& s : a.rl_set) where[s.instance.id] += "R";
    for (const auto& s : a.terminal_only_set) where[s.instance.id] += "T";
    for (const auto& r : a.rejected) where[r.id] += "X:" + r.reason;
    c.expect(where.size() == corpus.programs.size(), "some sample missing from every output");
    const char* want[4] = {"SR", "T", "X:too_long", "X:contaminated"};
    for (std::size_t i = 0; i < corpus.programs.size(); ++i) {
        const auto it = where.find(corpus.programs[i].id);
        const std::string got = it == where.end() ? "<none>" : it->second;
        c.expect(got == want[static_cast<int>(corpus.expected[i])], corpus.programs[i].id + " routed to " + got);
    }
    for (const auto& r : a.rejected) {
        if (r.reason == "contaminated") c.expect(!r.detail.empty(), "contaminated sample without witness");
    }
}

void grpo_sim_properties(Check& c) {
    using namespace trace_forge::sim;
    // finite differences
    std::mt19937_64 rng(5);
    double worst = 0.0;
    for (int trial = 0; trial < 60; ++trial) {
        SyntheticEnv env;
        env.n_anchors = 1 + rng() % 4;
        env.vocab = 2 + rng() % 3;
        for (std::size_t i = 0; i < env.n_anchors; ++i) env.correct_path.push_back(rng() % env.vocab);
        env.answer_depends_on_trace = rng() % 2;
        TabularPolicy old(env);
        std::normal_distribution<double> d(0.0, 0.7);
        for (auto& v : old.logits()) v = d(rng);
        for (auto& v : old.reference_logits()) v = d(rng);
        TabularPolicy pol = old;
        for (auto& v : pol.logits()) v += d(rng);
        const auto batch = rollout(old, env, 2 + rng() % 5, rng());
        TrainConfig cfg;
        cfg.method = static_cast<Method>(trial % 3);
        cfg.kl_coef = 0.3;
        const auto g = objective(pol, old, env, batch, cfg).gradient;
        double diff = 0, na = 0, nf = 0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            TabularPolicy plus = pol, minus = pol;
            plus.logits()[k] += 1e-5;
            minus.logits()[k] -= 1e-5;
            const double fd =
                (objective(plus, old, env, batch, cfg).value - objective(minus, old, env, batch, cfg).value) / 2e-5;
            diff += (fd - g[k]) * (fd - g[k]);
            na += g[k] * g[k];
            nf += fd * fd;
        }
        const double scale = std::max(std::sqrt(na), std::sqrt(nf));
        if (scale > 0) worst = std::max(worst, std::sqrt(diff) / scale);
    }
    c.expect(worst < 1e-5, "gradient relative error " + std::to_string(worst));

    // lambda = 0 ablation
    for (std::uint64_t seed : {1, 2, 3}) {
        TrainConfig a;
        a.method = Method::bilevel;
        a.lambda = 0.0;
        a.seed = seed;
        a.steps = 300;
        TrainConfig b = a;
        b.method = Method::step_group;
        const auto ra = train(hard_env(), a);
        const auto rb = train(hard_env(), b);
        bool same = ra.policy == rb.policy;
        for (std::size_t t = 0; t < ra.curve.size(); ++t) {
            same &= ra.curve[t].stepwise_accuracy == rb.curve[t].stepwise_accuracy &&
                    ra.curve[t].expected_final_reward == rb.curve[t].expected_final_reward;
        }
        c.expect(same, "bilevel(lambda=0) differs from step_group, seed " + std::to_string(seed));
    }

    // hard env ordering, default seeds 1..3, 1500 steps
    double acc[3] = {0, 0, 0};
    for (int m = 0; m < 3; ++m) {
        for (std::uint64_t seed : {1, 2, 3}) {
            TrainConfig cfg;
            cfg.method = static_cast<Method>(m);
            cfg.seed = seed;
            cfg.steps = 1500;
            acc[m] += train(hard_env(), cfg).curve.back().stepwise_accuracy / 3.0;
        }
    }
    std::printf("    stepwise accuracy after 1500 steps: terminal %.4f, step_group %.4f, bilevel %.4f\n", acc[0], acc[1],
                acc[2]);
    c.expect(acc[2] >= acc[1] && acc[1] >= acc[0], "ordering bilevel >= step_group >= terminal violated");
}

void alignment(Check& c) {
    const std::string src =
        "def f(a):\n"
        "    b = a + 1\n"
        "    if b > 2:\n"
        "        c = b * 2\n"
        "    return c\n";
    const auto out = instrument(SourceProgram{"p", "f", src});
    const auto orig = split_lines(src);
    const auto edited = split_lines(out.source_text);
    c.expect(edited.size() == orig.size() + 3, "constructed file does not have 3 insertions");
    const auto oracle = testing::map_by_search(orig, edited);
    for (int l = 1; l <= static_cast<int>(orig.size()); ++l) {
        for (auto task : {BenchTask::CCP, BenchTask::PSP, BenchTask::EPP}) {
            c.expect(align(LineQuery{"p", task, l, ""}, out.line_map).line == oracle.lookup(l),
                     "line " + std::to_string(l) + " misaligned");
        }
        const LineQuery op{"p", BenchTask::OP, std::nullopt, "x"};
        c.expect(align(op, out.line_map) == op, "OP query changed");
    }

    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 30);
        const auto o = testing::numbered_lines(n, "o");
        const auto mid = testing::edited_lines(testing::random_pattern(rng, n), o);
        const auto fin = testing::edited_lines(testing::random_pattern(rng, static_cast<int>(mid.size())), mid);
        const auto m1 = testing::map_by_search(o, mid);
        const auto m2 = testing::map_by_search(mid, fin);
        std::vector<LineQuery> qs;
        for (int l = 1; l <= n; ++l) {
            if (rng() % 2) qs.push_back({"p", BenchTask::CCP, l, ""});
        }
        const auto twice = align_file(align_file(qs, m1), m2);
        const auto once = align_file(qs, m1.then(m2));
        c.expect(twice == once, "composition fails at trial " + std::to_string(trial));
        const auto direct = align_file(qs, testing::map_by_search(o, fin));
        c.expect(once == direct, "composed map disagrees with the offset oracle at trial " + std::to_string(trial));
        for (std::size_t i = 1; i < once.size(); ++i) {
            c.expect(*once[i - 1].line < *once[i].line, "monotonicity fails at trial " + std::to_string(trial));
        }
    }
}

}  // namespace

int main() {
    bool ok = true;
    ok &= report("Worked-case scoring", 1.0, worked_cases);
    ok &= report("Advantage oracle equivalence", 10.0, advantage_oracle);
    ok &= report("Future-correctness ordering", 60.0, future_credit_ordering);
    ok &= report("Codec round-trip", 60.0, codec_round_trip);
    ok &= report("Pipeline routing", 60.0, pipeline_routing);
    ok &= report("grpo-sim properties", 120.0, grpo_sim_properties);
    ok &= report("Alignment", 60.0, alignment);
    return ok ? 0 : 1;
}
