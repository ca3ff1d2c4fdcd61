#include "trace_forge/executor.hpp"

#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include "trace_forge/errors.hpp"
#include "trace_forge/instrumenter.hpp"
#include "trace_forge/literal.hpp"
#include "trace_forge/shim_process.hpp"

namespace trace_forge {
namespace {

// Extra wall-clock time the parent allows beyond the shim's own limit
// (interpreter start-up, result serialization) before killing it.
constexpr int kParentGraceMs = 1000;

std::vector<std::string> command_for(const std::filesystem::path& path) {
    if (path.extension() == ".py") return {"python3", path.string()};
    return {path.string()};
}

std::string input_key(std::string_view input) { return std::string(trim(input)); }

RunResult run_result_from_fixture(const Json& j) {
    RunResult r;
    r.status = j.value("status", std::string("ok"));
    r.error_text = j.value("error_text", std::string());
    if (j.contains("events")) {
        for (const auto& e : j.at("events")) {
            r.stdout_lines.push_back(e.at(0).get<std::string>() + ": " + e.at(1).get<std::string>());
        }
    } else if (j.contains("stdout_lines")) {
        r.stdout_lines = j.at("stdout_lines").get<std::vector<std::string>>();
    }
    r.return_repr = j.value("final_value", std::string());
    return r;
}

}  // namespace

std::vector<std::string> resolve_shim_command() {
    if (const char* env = std::getenv("TRACE_FORGE_SHIM"); env && *env) return command_for(env);
    std::error_code ec;
    const auto exe = std::filesystem::read_symlink("/proc/self/exe", ec);
    if (ec) return {};
    for (const char* name : {"trace_forge_shim.py", "trace_forge_shim"}) {
        const auto candidate = exe.parent_path() / name;
        if (std::filesystem::exists(candidate, ec)) return command_for(candidate);
    }
    return {};
}

ExecutionTrace parse_trace_output(std::string origin_id, const std::vector<std::string>& stdout_lines,
                                  std::string final_value) {
    ExecutionTrace trace;
    trace.origin_id = std::move(origin_id);
    trace.final_value = std::move(final_value);
    for (const auto& line : stdout_lines) {
        const auto sep = line.find(": ");
        if (sep == std::string::npos || !is_identifier(std::string_view(line).substr(0, sep))) {
            throw TraceParseError(line);
        }
        trace.events.push_back({line.substr(0, sep), line.substr(sep + 2)});
    }
    return trace;
}

std::string fixture_source_hash(std::string_view source_text) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(source_text)));
    return buf;
}

Executor::Executor(ExecutorConfig config) : config_(std::move(config)) {
    if (config_.pool_size < 1) throw std::invalid_argument("pool_size must be >= 1");
    if (config_.timeout_ms <= 0) throw std::invalid_argument("timeout_ms must be > 0");
    if (config_.fixture_path) {
        for (const auto& j : read_jsonl_file(*config_.fixture_path)) {
            try {
                RunResult r = run_result_from_fixture(j);
                const std::string input = input_key(j.at("input").get<std::string>());
                // Records without a source hash match any program with that id.
                if (j.contains("source_hash")) {
                    by_hash_[{j.at("source_hash").get<std::string>(), input}] = r;
                } else {
                    by_origin_[{j.at("origin_id").get<std::string>(), input}] = r;
                }
            } catch (const nlohmann::json::exception& e) {
                throw RecordError(std::string("malformed fixture record: ") + e.what(), j.value("origin_id", ""));
            }
        }
    }
    std::vector<std::string> command = config_.shim_command;
    if (command.empty()) command = resolve_shim_command();
    if (!command.empty()) pool_ = std::make_unique<ShimPool>(command, config_.pool_size);
}

Executor::~Executor() = default;

RunResult Executor::run_live(const std::string& source_text, const std::string& entry_name,
                             const std::string& input_literal) {
    Json req{{"mode", "run"},
             {"source_text", source_text},
             {"entry_name", entry_name},
             {"input_literal", input_literal},
             {"timeout_ms", config_.timeout_ms}};
    auto lease = pool_->acquire();
    auto reply = lease->request(req, std::chrono::milliseconds(config_.timeout_ms + kParentGraceMs));
    RunResult r;
    if (!reply.response) {
        r.status = reply.failure == "timeout" ? "timeout" : "exception";
        r.error_text = reply.failure == "timeout" ? "killed by parent after deadline" : "shim process died";
        return r;
    }
    const Json& resp = *reply.response;
    r.status = resp.value("status", std::string("exception"));
    r.stdout_lines = resp.value("stdout_lines", std::vector<std::string>{});
    r.return_repr = resp.value("return_repr", std::string());
    r.error_text = resp.value("error_text", std::string());
    return r;
}

RunResult Executor::run(const std::string& origin_id, const std::string& source_text, const std::string& entry_name,
                        const std::string& input_literal) {
    const std::string input = input_key(input_literal);
    if (auto it = by_hash_.find({fixture_source_hash(source_text), input}); it != by_hash_.end()) return it->second;
    if (auto it = by_origin_.find({origin_id, input}); it != by_origin_.end()) return it->second;
    if (!pool_) {
        RunResult missing;
        missing.status = "exception";
        missing.error_text = "no recorded run for '" + origin_id + "' on " + input + " and no shim configured";
        return missing;
    }
    RunResult r = run_live(source_text, entry_name, input_literal);
    if (recording_) {
        Json rec{{"origin_id", origin_id},
                 {"source_hash", fixture_source_hash(source_text)},
                 {"input", input},
                 {"status", r.status}};
        try {
            const auto trace = parse_trace_output(origin_id, r.stdout_lines, r.return_repr);
            rec["events"] = Json(trace).at("events");
        } catch (const TraceParseError&) {
            rec["stdout_lines"] = r.stdout_lines;
        }
        rec["final_value"] = r.return_repr;
        if (!r.error_text.empty()) rec["error_text"] = r.error_text;
        std::lock_guard lock(record_mu_);
        recorded_.push_back(std::move(rec));
    }
    return r;
}

std::vector<Json> Executor::recorded_fixtures() const {
    std::lock_guard lock(record_mu_);
    return recorded_;
}

ExecutionTrace Executor::generate_trace(const InstrumentedProgram& program, const std::string& input_literal) {
    const RunResult r = run(program.origin_id, program.source_text, program.entry_name, input_literal);
    if (r.status != "ok") throw ExecutionFailed(r.status, r.error_text);
    return parse_trace_output(program.origin_id, r.stdout_lines, r.return_repr);
}

std::optional<std::string> Executor::canonicalize(std::string_view literal) {
    if (auto c = canonicalize_literal(literal)) return c;
    if (!pool_) return std::nullopt;
    Json req{{"mode", "canonicalize"}, {"input_literal", std::string(literal)}, {"timeout_ms", config_.timeout_ms}};
    auto lease = pool_->acquire();
    auto reply = lease->request(req, std::chrono::milliseconds(config_.timeout_ms + kParentGraceMs));
    if (!reply.response || reply.response->value("status", "") != "ok") return std::nullopt;
    return reply.response->value("return_repr", std::string());
}

bool Executor::values_equal(std::string_view a, std::string_view b) {
    const auto ca = canonicalize(a);
    const auto cb = canonicalize(b);
    if (ca && cb) return *ca == *cb;
    const std::string_view ta = trim(a);
    const std::string_view tb = trim(b);
    if (ta == tb) return true;
    // A quoted string on one side may stand for the bare text on the other.
    if (ca) {
        if (auto s = decode_str_literal(*ca)) return *s == tb;
    }
    if (cb) {
        if (auto s = decode_str_literal(*cb)) return *s == ta;
    }
    return false;
}

bool Executor::check_equivalence(const SourceProgram& original, const InstrumentedProgram& instrumented,
                                 const std::vector<std::string>& inputs) {
    if (inputs.empty()) throw std::invalid_argument("check_equivalence needs at least one input");
    for (const auto& input : inputs) {
        const RunResult a = run(original.id, original.source_text, original.entry_name, input);
        if (a.status != "ok") throw ExecutionFailed(a.status, a.error_text);
        const RunResult b = run(instrumented.origin_id, instrumented.source_text, instrumented.entry_name, input);
        if (b.status != "ok") throw ExecutionFailed(b.status, b.error_text);
        if (a.return_repr != b.return_repr) return false;
    }
    return true;
}

}  // namespace trace_forge
