#include "trace_forge/dataset_pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <optional>
#include <thread>
#include <unordered_set>

#include "trace_forge/errors.hpp"
#include "trace_forge/instrumenter.hpp"
#include "trace_forge/response_codec.hpp"

namespace trace_forge {
namespace {

std::string join_gram(const std::vector<std::string>& tokens, std::size_t begin, std::size_t k, char sep) {
    std::string out;
    for (std::size_t i = begin; i < begin + k; ++i) {
        if (i > begin) out.push_back(sep);
        out += tokens[i];
    }
    return out;
}

struct Staged {
    std::string id;
    SourceProgram program;
    ProgramInput input;
};

// Outcome of the parallel stage for one sample.
struct Outcome {
    std::optional<DatasetSample> sample;
    std::optional<Rejection> rejection;
};

bool target_round_trips(const DatasetSample& s) {
    try {
        const auto parsed = parse_response(s.target_text, s.instance.task_kind);
        if (!parsed.ok()) return false;
        const auto states = parsed.trajectory.predicted_states();
        if (states.size() != s.trace.n()) return false;
        for (std::size_t i = 0; i < states.size(); ++i) {
            if (states[i] != s.trace.events[i].name + ": " + s.trace.events[i].value) return false;
        }
        if (parsed.trajectory.answer() != s.instance.target) return false;
        if (s.instance.task_kind == TaskKind::input_prediction &&
            parsed.trajectory.committed_input() != s.instance.gt_input) {
            return false;
        }
        return true;
    } catch (const UnbalancedTags&) {
        return false;
    }
}

Outcome process(const Staged& st, const PipelineConfig& cfg, Executor& executor) {
    InstrumentationConfig icfg;
    icfg.max_static_anchors = cfg.max_static_anchors;
    icfg.dropout_rate = cfg.dropout_rate;
    icfg.rng_seed = cfg.seed ^ fnv1a64(st.id);
    try {
        DatasetSample s;
        s.instance.id = st.id;
        s.instance.program = instrument(st.program, icfg);
        s.instance.task_kind = st.input.task_kind;
        s.instance.gt_input = std::string(trim(st.input.input));
        s.trace = executor.generate_trace(s.instance.program, s.instance.gt_input);
        s.trace.origin_id = st.id;
        if (s.instance.task_kind == TaskKind::output_prediction) {
            s.instance.condition = s.instance.gt_input;
            s.instance.target = s.trace.final_value;
        } else {
            s.instance.condition = s.trace.final_value;
            s.instance.target = s.instance.gt_input;
        }
        s.target_text = serialize_target(s.trace, s.instance.target, s.instance.task_kind, s.instance.gt_input);
        if (!target_round_trips(s)) {
            return {std::nullopt, Rejection{st.id, "unserializable_target", "trace values do not survive the tagged format"}};
        }
        return {std::move(s), std::nullopt};
    } catch (const ExecutionFailed& e) {
        return {std::nullopt, Rejection{st.id, "execution_failed:" + e.status(), e.what()}};
    } catch (const Error& e) {
        return {std::nullopt, Rejection{st.id, e.code(), e.what()}};
    }
}

}  // namespace

std::vector<std::string> ngram_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || c == '_' || c >= 0x80) {
            cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

DecontaminationResult decontaminate(const std::vector<SourceProgram>& samples,
                                    const std::vector<std::string>& benchmark_corpus, std::size_t k) {
    if (k < 1) throw std::invalid_argument("ngram k must be >= 1");
    std::unordered_set<std::string> bench;
    for (const auto& text : benchmark_corpus) {
        const auto tokens = ngram_tokens(text);
        for (std::size_t i = 0; i + k <= tokens.size(); ++i) bench.insert(join_gram(tokens, i, k, '\x1f'));
    }
    DecontaminationResult out;
    for (const auto& s : samples) {
        const auto tokens = ngram_tokens(s.source_text);
        std::optional<std::string> witness;
        for (std::size_t i = 0; i + k <= tokens.size() && !witness; ++i) {
            if (bench.count(join_gram(tokens, i, k, '\x1f'))) witness = join_gram(tokens, i, k, ' ');
        }
        if (witness) {
            out.removed.emplace_back(s, *witness);
        } else {
            out.kept.push_back(s);
        }
    }
    return out;
}

void assign_missing_ids(std::vector<SourceProgram>& programs) {
    for (std::size_t i = 0; i < programs.size(); ++i) {
        if (programs[i].id.empty()) programs[i].id = "train_" + std::to_string(i);
    }
}

PipelineOutput build(const std::vector<SourceProgram>& programs, const std::vector<ProgramInput>& inputs,
                     const std::vector<std::string>& benchmark_corpus, const PipelineConfig& cfg, Executor& executor) {
    if (cfg.max_trace_lines < 1) throw std::invalid_argument("max_trace_lines must be >= 1");
    PipelineOutput out;

    std::map<std::string, std::vector<const ProgramInput*>> by_program;
    std::map<std::string, const SourceProgram*> program_by_id;
    for (const auto& p : programs) {
        if (!program_by_id.emplace(p.id, &p).second) out.rejected.push_back({p.id, "duplicate_id", ""});
    }
    for (const auto& in : inputs) {
        if (!program_by_id.count(in.program_id)) {
            out.rejected.push_back({in.program_id, "unknown_program", "input refers to no program"});
            continue;
        }
        by_program[in.program_id].push_back(&in);
    }

    std::vector<SourceProgram> with_inputs;
    for (const auto& p : programs) {
        if (program_by_id.at(p.id) != &p) continue;
        // A program without inputs yields no samples.
        if (by_program.count(p.id)) with_inputs.push_back(p);
    }

    auto decon = decontaminate(with_inputs, benchmark_corpus, cfg.ngram_k);
    auto sample_ids = [&](const std::string& program_id) {
        const auto& ins = by_program.at(program_id);
        std::vector<std::string> ids;
        for (std::size_t k = 0; k < ins.size(); ++k) {
            ids.push_back(ins.size() == 1 ? program_id : program_id + "#" + std::to_string(k));
        }
        return ids;
    };
    for (const auto& [p, witness] : decon.removed) {
        for (const auto& id : sample_ids(p.id)) out.rejected.push_back({id, "contaminated", witness});
    }

    std::vector<Staged> staged;
    for (const auto& p : decon.kept) {
        const auto ids = sample_ids(p.id);
        const auto& ins = by_program.at(p.id);
        for (std::size_t k = 0; k < ins.size(); ++k) staged.push_back({ids[k], p, *ins[k]});
    }

    std::vector<Outcome> outcomes(staged.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < staged.size(); i = next++) outcomes[i] = process(staged[i], cfg, executor);
    };
    const std::size_t nthreads = std::max<std::size_t>(1, std::min(cfg.workers, staged.size()));
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < nthreads; ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();

    for (auto& o : outcomes) {
        if (o.rejection) {
            out.rejected.push_back(std::move(*o.rejection));
            continue;
        }
        DatasetSample& s = *o.sample;
        const std::size_t n = s.trace.n();
        if (n > cfg.max_trace_lines) {
            out.rejected.push_back({s.instance.id, "too_long",
                                    std::to_string(n) + " trace lines > " + std::to_string(cfg.max_trace_lines)});
        } else if (n <= 1) {
            out.terminal_only_set.push_back(std::move(s));
        } else {
            out.sft_set.push_back(s);
            out.rl_set.push_back(std::move(s));
        }
    }
    return out;
}

AnchorStats anchor_stats(const std::vector<std::size_t>& counts) {
    if (counts.empty()) throw EmptySet("instrumented set");
    auto sorted = counts;
    std::sort(sorted.begin(), sorted.end());
    AnchorStats s;
    double sum = 0.0;
    for (auto c : sorted) sum += static_cast<double>(c);
    s.mean = sum / static_cast<double>(sorted.size());
    const std::size_t m = sorted.size() / 2;
    s.median = sorted.size() % 2 ? static_cast<double>(sorted[m]) : (sorted[m - 1] + sorted[m]) / 2.0;
    s.min = sorted.front();
    s.max = sorted.back();
    return s;
}

AnchorStats anchor_stats(const std::vector<DatasetSample>& samples) {
    std::vector<std::size_t> counts;
    for (const auto& s : samples) counts.push_back(s.trace.n());
    return anchor_stats(counts);
}

}  // namespace trace_forge
