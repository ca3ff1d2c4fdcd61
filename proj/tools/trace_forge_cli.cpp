#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trace_forge/advantage_engine.hpp"
#include "trace_forge/bench_align.hpp"
#include "trace_forge/dataset_pipeline.hpp"
#include "trace_forge/errors.hpp"
#include "trace_forge/executor.hpp"
#include "trace_forge/grpo_sim.hpp"
#include "trace_forge/instrumenter.hpp"
#include "trace_forge/records.hpp"
#include "trace_forge/response_codec.hpp"
#include "trace_forge/reward_engine.hpp"

namespace tf = trace_forge;
using tf::Json;

namespace {

constexpr const char* kVersion = "trace-forge 0.1.0";

// A bad record; the id goes to stderr and the exit code is 2.
struct DataError : std::runtime_error {
    DataError(std::string id, const std::string& msg) : std::runtime_error(msg), id(std::move(id)) {}
    std::string id;
};

struct Globals {
    std::uint64_t seed = 0;
    std::size_t pool = 1;
    bool quiet = false;
};

struct ExecOptions {
    std::string fixtures;
    std::string record_fixtures;
    int timeout_ms = 5000;

    void add_to(CLI::App* sub) {
        sub->add_option("--fixtures", fixtures, "Recorded runs (JSONL) consulted before the shim");
        sub->add_option("--record-fixtures", record_fixtures, "Append live runs to this JSONL file");
        sub->add_option("--timeout-ms", timeout_ms, "Per-run timeout")->check(CLI::PositiveNumber);
    }

    std::unique_ptr<tf::Executor> make(const Globals& g) const {
        tf::ExecutorConfig cfg;
        cfg.pool_size = g.pool;
        cfg.timeout_ms = timeout_ms;
        if (!fixtures.empty()) cfg.fixture_path = fixtures;
        auto ex = std::make_unique<tf::Executor>(cfg);
        if (!record_fixtures.empty()) ex->set_recording(true);
        return ex;
    }

    void flush(const tf::Executor& ex) const {
        if (record_fixtures.empty()) return;
        std::ofstream out(record_fixtures, std::ios::app | std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + record_fixtures);
        for (const auto& rec : ex.recorded_fixtures()) tf::write_jsonl_line(out, rec);
    }
};

class Output {
public:
    explicit Output(const std::string& path) {
        if (path.empty() || path == "-") return;
        file_.open(path, std::ios::binary | std::ios::trunc);
        if (!file_) throw std::runtime_error("cannot write " + path);
    }
    std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }
    void line(const Json& j) { tf::write_jsonl_line(stream(), j); }

private:
    std::ofstream file_;
};

std::string record_id(const Json& j) {
    for (const char* key : {"id", "origin_id", "instance_id", "program_id"}) {
        if (j.is_object() && j.contains(key) && j[key].is_string()) return j[key].get<std::string>();
    }
    return {};
}

template <typename T>
T decode(const Json& j) {
    try {
        return tf::decode_record<T>(j);
    } catch (const tf::RecordError& e) {
        throw DataError(e.record_id(), e.what());
    } catch (const std::exception& e) {
        throw DataError(record_id(j), e.what());
    }
}

std::string bench_text(const Json& j) {
    if (j.is_string()) return j.get<std::string>();
    for (const char* key : {"text", "source_text", "program", "code", "prompt"}) {
        if (j.contains(key) && j[key].is_string()) return j[key].get<std::string>();
    }
    throw DataError(record_id(j), "benchmark record has no text field");
}

// --- subcommands -----------------------------------------------------------

struct InstrumentCmd {
    std::string programs = "-";
    std::string out;
    double dropout = 0.0;
    std::size_t max_anchors = 10;
    bool no_unroll = false;

    void add(CLI::App& app, std::function<void()>& run, const Globals& g) {
        auto* sub = app.add_subcommand("instrument", "Insert trace anchors into program records");
        sub->add_option("--programs", programs, "Program records ({id, entry_name, source_text}); - for stdin");
        sub->add_option("--out", out, "Output file (default stdout)");
        sub->add_option("--dropout", dropout, "Anchor dropout rate")->check(CLI::Range(0.0, 1.0));
        sub->add_option("--max-anchors", max_anchors, "Static anchor limit")->check(CLI::PositiveNumber);
        sub->add_flag("--no-unroll", no_unroll, "Reject one-line compound statements instead of unrolling");
        sub->fallthrough();
        sub->callback([this, &run, &g] { run = [this, &g] { exec(g); }; });
    }

    void exec(const Globals& g) {
        Output o(out);
        for (const auto& j : tf::read_jsonl_file(programs)) {
            auto p = decode<tf::SourceProgram>(j);
            tf::InstrumentationConfig cfg;
            cfg.max_static_anchors = max_anchors;
            cfg.unroll_oneliners = !no_unroll;
            cfg.dropout_rate = dropout;
            cfg.rng_seed = g.seed ^ tf::fnv1a64(p.id);
            try {
                o.line(tf::instrument(p, cfg));
            } catch (const tf::Error& e) {
                throw DataError(p.id, e.what());
            }
        }
    }
};

struct TraceCmd {
    std::string instrumented = "-";
    std::string inputs;
    std::string out;
    ExecOptions exec_opts;

    void add(CLI::App& app, std::function<void()>& run, const Globals& g) {
        auto* sub = app.add_subcommand("trace", "Execute instrumented programs and collect traces");
        sub->add_option("--instrumented", instrumented, "Instrumented program records; - for stdin");
        sub->add_option("--inputs", inputs, "Input records ({id, input})")->required();
        sub->add_option("--out", out, "Output file (default stdout)");
        exec_opts.add_to(sub);
        sub->fallthrough();
        sub->callback([this, &run, &g] { run = [this, &g] { exec(g); }; });
    }

    void exec(const Globals& g) {
        std::map<std::string, tf::InstrumentedProgram> programs;
        for (const auto& j : tf::read_jsonl_file(instrumented)) {
            auto p = decode<tf::InstrumentedProgram>(j);
            programs[p.origin_id] = std::move(p);
        }
        auto ex = exec_opts.make(g);
        Output o(out);
        for (const auto& j : tf::read_jsonl_file(inputs)) {
            const std::string id = record_id(j);
            auto it = programs.find(id);
            if (it == programs.end()) throw DataError(id, "no instrumented program with this id");
            if (!j.contains("input") || !j["input"].is_string()) throw DataError(id, "input record lacks 'input'");
            const std::string input = j["input"].get<std::string>();
            try {
                Json rec = ex->generate_trace(it->second, input);
                rec["input"] = std::string(tf::trim(input));
                o.line(rec);
            } catch (const tf::Error& e) {
                exec_opts.flush(*ex);
                throw DataError(id, e.what());
            }
        }
        exec_opts.flush(*ex);
    }
};

struct ParseCmd {
    std::string responses = "-";
    std::string kind = "output";
    std::string out;

    void add(CLI::App& app, std::function<void()>& run, const Globals&) {
        auto* sub = app.add_subcommand("parse", "Parse tagged model responses into trajectories");
        sub->add_option("--responses", responses, "Response records ({instance_id, text[, task_kind]})");
        sub->add_option("--kind", kind, "Default task kind (output|input)");
        sub->add_option("--out", out, "Output file (default stdout)");
        sub->fallthrough();
        sub->callback([this, &run] { run = [this] { exec(); }; });
    }

    void exec() {
        Output o(out);
        for (const auto& j : tf::read_jsonl_file(responses)) {
            const std::string id = j.value("instance_id", record_id(j));
            try {
                const auto k = tf::task_kind_from_string(j.value("task_kind", kind));
                const auto parsed = tf::parse_response(j.at("text").get<std::string>(), k, id);
                Json rec = parsed.trajectory;
                if (parsed.malformed) rec["malformed"] = *parsed.malformed;
                o.line(rec);
            } catch (const std::exception& e) {
                throw DataError(id, e.what());
            }
        }
    }
};

struct ScoreCmd {
    std::string trajectories = "-";
    std::string traces;
    std::string instances;
    std::string kind = "output";
    std::string mode = "gt_input";
    double r_internal = 1.0;
    double r_final = 1.0;
    std::string out;
    ExecOptions exec_opts;

    void add(CLI::App& app, std::function<void()>& run, const Globals& g) {
        auto* sub = app.add_subcommand("score", "Score trajectories against ground-truth traces");
        sub->add_option("--trajectories", trajectories, "Trajectory or raw response records");
        sub->add_option("--traces", traces, "Trace records keyed by origin_id")->required();
        sub->add_option("--instances", instances, "Task instances; input tasks are scored by execution");
        sub->add_option("--kind", kind, "Task kind for raw responses (output|input)");
        sub->add_option("--mode", mode, "Input-task trace: gt_input or committed_input")
            ->check(CLI::IsMember({"gt_input", "committed_input"}));
        sub->add_option("--r-internal", r_internal, "Internal reward budget");
        sub->add_option("--r-final", r_final, "Terminal reward weight");
        sub->add_option("--out", out, "Output file (default stdout)");
        exec_opts.add_to(sub);
        sub->fallthrough();
        sub->callback([this, &run, &g] { run = [this, &g] { exec(g); }; });
    }

    void exec(const Globals& g) {
        std::map<std::string, tf::ExecutionTrace> by_id;
        for (const auto& j : tf::read_jsonl_file(traces)) {
            auto t = decode<tf::ExecutionTrace>(j);
            by_id[t.origin_id] = std::move(t);
        }
        std::map<std::string, tf::TaskInstance> inst;
        if (!instances.empty()) {
            for (const auto& j : tf::read_jsonl_file(instances)) {
                auto t = decode<tf::TaskInstance>(j);
                inst[t.id] = std::move(t);
            }
        }
        tf::RewardConfig cfg;
        cfg.r_internal_budget = r_internal;
        cfg.r_final = r_final;
        cfg.input_task_trace_mode =
            mode == "committed_input" ? tf::InputTraceMode::committed_input : tf::InputTraceMode::gt_input;
        auto ex = exec_opts.make(g);
        Output o(out);
        for (const auto& j : tf::read_jsonl_file(trajectories)) {
            const std::string id = j.value("instance_id", record_id(j));
            tf::ParsedResponse resp;
            try {
                if (j.contains("text")) {
                    resp = tf::parse_response(j["text"].get<std::string>(),
                                              tf::task_kind_from_string(j.value("task_kind", kind)), id);
                } else {
                    resp.trajectory = decode<tf::Trajectory>(j);
                    if (j.contains("malformed")) resp.malformed = j["malformed"].get<std::string>();
                }
            } catch (const tf::UnbalancedTags&) {
                resp.trajectory.instance_id = id;
                resp.malformed = "unbalanced tags";
            } catch (const DataError&) {
                throw;
            } catch (const std::exception& e) {
                throw DataError(id, e.what());
            }
            tf::RewardVector r;
            try {
                auto ii = inst.find(id);
                if (ii != inst.end() && ii->second.task_kind == tf::TaskKind::input_prediction) {
                    r = resp.ok() ? tf::score_input_task(resp.trajectory, ii->second, cfg, *ex) : tf::RewardVector{};
                } else {
                    auto it = by_id.find(id);
                    if (it == by_id.end()) throw DataError(id, "no trace with this id");
                    r = tf::score(resp, it->second, cfg, *ex);
                }
            } catch (const tf::Error& e) {
                throw DataError(id, e.what());
            }
            o.line(Json{{"instance_id", id}, {"step", r.step}, {"final", r.final}, {"budgeted_total", r.budgeted_total}});
        }
        exec_opts.flush(*ex);
    }
};

struct AdvantageCmd {
    std::string rewards = "-";
    double lambda = tf::kDefaultLambda;
    double epsilon = tf::kDefaultEpsilon;
    std::string out;

    void add(CLI::App& app, std::function<void()>& run, const Globals&) {
        auto* sub = app.add_subcommand("advantage", "Bi-level group advantages for reward groups");
        sub->add_option("--rewards", rewards, "Group records ({id, step: [[0/1...]...], final: [...]})");
        sub->add_option("--lambda", lambda, "Intra-trajectory weight")->check(CLI::NonNegativeNumber);
        sub->add_option("--epsilon", epsilon, "Z-score stabilizer")->check(CLI::NonNegativeNumber);
        sub->add_option("--out", out, "Output file (default stdout)");
        sub->fallthrough();
        sub->callback([this, &run] { run = [this] { exec(); }; });
    }

    static Json rows(const tf::Matrix& m) {
        Json out = Json::array();
        for (std::size_t r = 0; r < m.rows(); ++r) out.push_back(m.row(r));
        return out;
    }

    void exec() {
        Output o(out);
        for (const auto& j : tf::read_jsonl_file(rewards)) {
            const std::string id = record_id(j);
            try {
                const auto step = j.at("step").get<std::vector<std::vector<double>>>();
                const auto fin = j.at("final").get<std::vector<double>>();
                if (step.size() != fin.size()) throw tf::ShapeMismatch("step rows and final length differ");
                const auto adv = tf::compute_advantages(tf::GroupRewards::from_ragged(step, fin), lambda, epsilon);
                o.line(Json{{"id", id},
                            {"group", rows(adv.group)},
                            {"intra", rows(adv.intra)},
                            {"combined", rows(adv.combined)},
                            {"final", adv.final},
                            {"lambda", lambda},
                            {"epsilon", epsilon}});
            } catch (const std::exception& e) {
                throw DataError(id, e.what());
            }
        }
    }
};

struct BuildCmd {
    std::string programs;
    std::string inputs;
    std::string bench;
    std::string out_dir;
    std::size_t max_trace = 10;
    std::size_t ngram = 10;
    std::size_t max_anchors = 10;
    double dropout = 0.0;
    ExecOptions exec_opts;

    void add(CLI::App& app, std::function<void()>& run, const Globals& g) {
        auto* sub = app.add_subcommand("build-dataset", "Build SFT and RL sets from programs and inputs");
        sub->add_option("--programs", programs, "Program records")->required();
        sub->add_option("--inputs", inputs, "Input records ({id, input[, task]})")->required();
        sub->add_option("--bench", bench, "Benchmark records for decontamination");
        sub->add_option("--out-dir", out_dir, "Output directory")->required();
        sub->add_option("--max-trace", max_trace, "Longest accepted trace")->check(CLI::PositiveNumber);
        sub->add_option("--ngram", ngram, "Decontamination n-gram size")->check(CLI::PositiveNumber);
        sub->add_option("--max-anchors", max_anchors, "Static anchor limit")->check(CLI::PositiveNumber);
        sub->add_option("--dropout", dropout, "Anchor dropout rate")->check(CLI::Range(0.0, 1.0));
        exec_opts.add_to(sub);
        sub->fallthrough();
        sub->callback([this, &run, &g] { run = [this, &g] { exec(g); }; });
    }

    void exec(const Globals& g) {
        std::vector<tf::SourceProgram> progs;
        for (const auto& j : tf::read_jsonl_file(programs)) progs.push_back(decode<tf::SourceProgram>(j));
        tf::assign_missing_ids(progs);
        std::vector<tf::ProgramInput> ins;
        for (const auto& j : tf::read_jsonl_file(inputs)) {
            const std::string id = record_id(j);
            try {
                tf::ProgramInput in{id, j.at("input").get<std::string>(), tf::TaskKind::output_prediction};
                if (j.contains("task")) in.task_kind = tf::task_kind_from_string(j["task"].get<std::string>());
                ins.push_back(std::move(in));
            } catch (const std::exception& e) {
                throw DataError(id, e.what());
            }
        }
        std::vector<std::string> corpus;
        if (!bench.empty()) {
            for (const auto& j : tf::read_jsonl_file(bench)) corpus.push_back(bench_text(j));
        }
        tf::PipelineConfig cfg;
        cfg.max_trace_lines = max_trace;
        cfg.ngram_k = ngram;
        cfg.max_static_anchors = max_anchors;
        cfg.dropout_rate = dropout;
        cfg.seed = g.seed;
        cfg.workers = g.pool;
        auto ex = exec_opts.make(g);
        const auto result = tf::build(progs, ins, corpus, cfg, *ex);
        exec_opts.flush(*ex);

        std::filesystem::create_directories(out_dir);
        auto write = [&](const std::string& name, const std::vector<tf::DatasetSample>& set, bool with_target) {
            Output o((std::filesystem::path(out_dir) / name).string());
            for (const auto& s : set) {
                Json rec{{"instance", s.instance}, {"trace", s.trace}};
                if (with_target) rec["target_text"] = s.target_text;
                o.line(rec);
            }
        };
        write("sft.jsonl", result.sft_set, true);
        write("rl.jsonl", result.rl_set, false);
        write("terminal_only.jsonl", result.terminal_only_set, false);
        {
            Output o((std::filesystem::path(out_dir) / "rejected.jsonl").string());
            for (const auto& r : result.rejected) o.line(Json{{"id", r.id}, {"reason", r.reason}, {"detail", r.detail}});
        }
        Json stats{{"sft", result.sft_set.size()},
                   {"rl", result.rl_set.size()},
                   {"terminal_only", result.terminal_only_set.size()},
                   {"rejected", result.rejected.size()}};
        std::map<std::string, std::size_t> reasons;
        for (const auto& r : result.rejected) ++reasons[r.reason];
        stats["rejected_by_reason"] = reasons;
        auto traced = result.sft_set;
        traced.insert(traced.end(), result.terminal_only_set.begin(), result.terminal_only_set.end());
        if (!traced.empty()) {
            const auto a = tf::anchor_stats(traced);
            stats["anchors"] = {{"mean", a.mean}, {"median", a.median}, {"min", a.min}, {"max", a.max}};
        }
        Output o((std::filesystem::path(out_dir) / "stats.json").string());
        o.stream() << stats.dump(2) << '\n';
        if (!g.quiet) {
            std::cerr << "sft " << result.sft_set.size() << ", terminal-only " << result.terminal_only_set.size()
                      << ", rejected " << result.rejected.size() << '\n';
        }
    }
};

struct AlignCmd {
    std::string queries = "-";
    std::string maps;
    std::string out;

    void add(CLI::App& app, std::function<void()>& run, const Globals&) {
        auto* sub = app.add_subcommand("align", "Move line-based benchmark queries to instrumented lines");
        sub->add_option("--queries", queries, "Query records ({program_id, task, line, payload})");
        sub->add_option("--maps", maps, "Instrumented program records carrying line maps")->required();
        sub->add_option("--out", out, "Output file (default stdout)");
        sub->fallthrough();
        sub->callback([this, &run] { run = [this] { exec(); }; });
    }

    void exec() {
        std::map<std::string, tf::LineMap> by_id;
        for (const auto& j : tf::read_jsonl_file(maps)) {
            auto p = decode<tf::InstrumentedProgram>(j);
            by_id[p.origin_id] = std::move(p.line_map);
        }
        Output o(out);
        std::size_t index = 0;
        for (const auto& j : tf::read_jsonl_file(queries)) {
            const auto q = decode<tf::LineQuery>(j);
            auto it = by_id.find(q.program_id);
            if (it == by_id.end()) throw DataError(q.program_id, "no line map for this program");
            try {
                o.line(tf::align(q, it->second));
            } catch (const tf::LineOutOfRange& e) {
                throw DataError(q.program_id, "query " + std::to_string(index) + ": line " +
                                                  std::to_string(e.line()) + " outside the line map");
            }
            ++index;
        }
    }
};

struct SimulateCmd {
    std::string method = "bilevel";
    double lambda = tf::kDefaultLambda;
    std::size_t group = 5;
    std::size_t steps = 1500;
    double lr = 0.05;
    double kl_coef = tf::sim::TrainConfig{}.kl_coef;
    std::size_t window = 50;
    std::size_t anchors = 6;
    std::size_t vocab = 8;
    bool last_only = false;
    std::string out_dir;

    void add(CLI::App& app, std::function<void()>& run, const Globals& g) {
        auto* sub = app.add_subcommand("simulate", "Train a tabular policy on a synthetic anchored task");
        sub->add_option("--method", method, "terminal, step_group or bilevel")
            ->check(CLI::IsMember({"terminal", "step_group", "step", "bilevel"}));
        sub->add_option("--lambda", lambda, "Intra-trajectory weight")->check(CLI::NonNegativeNumber);
        sub->add_option("--group", group, "Trajectories per group")->check(CLI::Range(2, 1 << 20));
        sub->add_option("--steps", steps, "Optimization steps")->check(CLI::PositiveNumber);
        sub->add_option("--lr", lr, "Learning rate");
        sub->add_option("--kl-coef", kl_coef, "Weight of the exact KL to the reference");
        sub->add_option("--window", window, "Smoothing window for the plotted curves")->check(CLI::PositiveNumber);
        sub->add_option("--anchors", anchors, "Anchors per trajectory")->check(CLI::PositiveNumber);
        sub->add_option("--vocab", vocab, "Choices per anchor")->check(CLI::Range(2, 1 << 16));
        sub->add_flag("--last-only", last_only, "Terminal reward depends only on the last anchor");
        sub->add_option("--out", out_dir, "Output directory for curves")->required();
        sub->fallthrough();
        sub->callback([this, &run, &g] { run = [this, &g] { exec(g); }; });
    }

    void exec(const Globals& g) {
        tf::sim::SyntheticEnv env = tf::sim::hard_env();
        if (anchors != env.n_anchors || vocab != env.vocab || last_only) {
            env.n_anchors = anchors;
            env.vocab = vocab;
            env.answer_depends_on_trace = !last_only;
            env.correct_path.clear();
            for (std::size_t i = 0; i < anchors; ++i) env.correct_path.push_back((3 + 5 * i) % vocab);
        }
        tf::sim::TrainConfig cfg;
        cfg.method = tf::sim::method_from_string(method);
        cfg.steps = steps;
        cfg.group = group;
        cfg.lr = lr;
        cfg.lambda = lambda;
        cfg.kl_coef = kl_coef;
        cfg.seed = g.seed;
        const auto result = tf::sim::train(env, cfg);
        Json meta{{"method", std::string(tf::sim::to_string(cfg.method))},
                  {"lambda", lambda},
                  {"group", group},
                  {"steps", steps},
                  {"lr", lr},
                  {"kl_coef", kl_coef},
                  {"seed", g.seed},
                  {"env",
                   {{"n_anchors", env.n_anchors},
                    {"vocab", env.vocab},
                    {"correct_path", env.correct_path},
                    {"answer_depends_on_trace", env.answer_depends_on_trace}}}};
        tf::sim::plot_curves(result.curve, out_dir, window, meta);
        if (!g.quiet) {
            const auto& last = result.curve.back();
            std::cerr << method << ": expected_final_reward " << last.expected_final_reward << ", stepwise_accuracy "
                      << last.stepwise_accuracy << '\n';
        }
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Execution-trace anchoring, reward and advantage toolkit", "trace-forge"};
    app.set_version_flag("--version", kVersion);
    Globals g;
    app.add_option("--seed", g.seed, "Seed for dropout and simulation");
    app.add_option("--pool", g.pool, "Worker / shim process count")->check(CLI::PositiveNumber);
    app.add_flag("--quiet", g.quiet, "Suppress progress output");
    app.require_subcommand(1);

    std::function<void()> run;
    InstrumentCmd instrument;
    TraceCmd trace;
    ParseCmd parse;
    ScoreCmd score;
    AdvantageCmd advantage;
    BuildCmd build;
    AlignCmd align;
    SimulateCmd simulate;
    instrument.add(app, run, g);
    trace.add(app, run, g);
    parse.add(app, run, g);
    score.add(app, run, g);
    advantage.add(app, run, g);
    build.add(app, run, g);
    align.add(app, run, g);
    simulate.add(app, run, g);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        run();
        return 0;
    } catch (const DataError& e) {
        std::cerr << "error: record " << (e.id.empty() ? "<unknown>" : e.id) << ": " << e.what() << '\n';
        return 2;
    } catch (const tf::RecordError& e) {
        std::cerr << "error: record " << (e.record_id().empty() ? "<unknown>" : e.record_id()) << ": " << e.what()
                  << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
