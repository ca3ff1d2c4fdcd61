#include "trace_forge/instrumenter.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <unordered_map>

#include "trace_forge/errors.hpp"
#include "trace_forge/python_source.hpp"

namespace trace_forge {
namespace {

using python::LogicalLine;
using python::Stmt;
using python::StmtKind;
using python::Token;
using python::TokenKind;

enum class Placement { after_stmt, after_loop, before_return, rewrite_return };

struct PlannedAnchor {
    std::string name;
    std::string expr;
    AnchorKind kind;
    Placement placement;
    const Stmt* stmt;
    std::size_t position;  // source offset used for textual ordering
    int seq;
};

struct Edit {
    std::size_t begin;
    std::size_t end;
    std::string text;
    // (newlines before the anchor within `text`, anchor)
    std::vector<std::pair<int, AnchorDecl>> anchors;
    int seq;
};

bool contains_token(const Stmt& s, std::string_view name) {
    for (std::size_t i = s.tok_begin; i < s.tok_end; ++i) {
        const Token& t = s.line->tokens[i];
        if (t.kind == TokenKind::name && t.text == name) return true;
    }
    for (const auto& b : s.body) {
        if (contains_token(b, name)) return true;
    }
    return false;
}

std::string returned_name(const Stmt& ret) {
    const auto& toks = ret.line->tokens;
    if (ret.tok_end - ret.tok_begin != 2) return {};
    const Token& t = toks[ret.tok_begin + 1];
    if (t.kind != TokenKind::name || !is_identifier(t.text)) return {};
    static const std::set<std::string> reserved{"None", "True", "False", "await", "lambda", "yield", "not"};
    return reserved.count(t.text) ? std::string{} : t.text;
}

class Planner {
public:
    Planner(const Stmt& def, const std::vector<std::string>& params) : def_(def) {
        for (const auto& p : params) first_binding_.emplace(p, 0);
        if (def_.inline_body) inline_header_by_line[def_.line] = &def_;
        record_bindings(def_.body);
    }

    void run() { walk(def_.body, false); }

    std::vector<PlannedAnchor> anchors;
    // Every statement of the function, indexed by its logical line.
    std::map<const LogicalLine*, std::vector<const Stmt*>> simple_by_line;
    std::map<const LogicalLine*, const Stmt*> inline_header_by_line;

private:
    void record_bindings(const std::vector<Stmt>& suite) {
        for (const auto& s : suite) {
            std::vector<std::string> names;
            if (s.kind == StmtKind::for_stmt) names = python::for_target_names(s);
            else if (!python::is_compound(s.kind)) names = python::assigned_names(s);
            for (const auto& n : names) first_binding_.emplace(n, s.first_line());
            if (!python::is_compound(s.kind)) simple_by_line[s.line].push_back(&s);
            if (s.inline_body) inline_header_by_line[s.line] = &s;
            record_bindings(s.body);
        }
    }

    void add(std::string name, std::string expr, AnchorKind kind, Placement placement, const Stmt& s,
             std::size_t position) {
        anchors.push_back({std::move(name), std::move(expr), kind, placement, &s, position, seq_++});
    }

    void walk(const std::vector<Stmt>& suite, bool in_loop) {
        for (std::size_t i = 0; i < suite.size(); ++i) {
            const Stmt& s = suite[i];
            switch (s.kind) {
            case StmtKind::for_stmt:
            case StmtKind::while_stmt: {
                const Stmt* orelse = nullptr;
                if (i + 1 < suite.size() && suite[i + 1].kind == StmtKind::else_clause) orelse = &suite[++i];
                walk(s.body, true);
                if (orelse) walk(orelse->body, true);
                if (!in_loop) plan_post_loop(s, orelse);
                break;
            }
            case StmtKind::if_stmt:
            case StmtKind::elif_clause:
            case StmtKind::else_clause: walk(s.body, in_loop); break;
            case StmtKind::decorator: break;
            case StmtKind::def_stmt:
                if (contains_token(s, "return")) throw UnsupportedConstruct("nested function with a return", s.first_line());
                break;
            case StmtKind::class_stmt: throw UnsupportedConstruct("class definition", s.first_line());
            case StmtKind::try_stmt:
            case StmtKind::except_clause:
            case StmtKind::finally_clause: throw UnsupportedConstruct("try/except", s.first_line());
            case StmtKind::with_stmt: throw UnsupportedConstruct("with statement", s.first_line());
            case StmtKind::async_stmt: throw UnsupportedConstruct("async construct", s.first_line());
            case StmtKind::match_stmt: throw UnsupportedConstruct("match statement", s.first_line());
            case StmtKind::return_stmt:
                if (!in_loop) plan_return(s);
                break;
            case StmtKind::assign:
            case StmtKind::aug_assign:
            case StmtKind::ann_assign: {
                if (in_loop) break;
                std::string name = python::single_assigned_name(s);
                if (name.empty()) break;
                if (i + 1 < suite.size() && suite[i + 1].kind == StmtKind::return_stmt &&
                    returned_name(suite[i + 1]) == name) {
                    break;  // the return_val anchor shows this value
                }
                add(name, name, AnchorKind::assignment, Placement::after_stmt, s, s.last_token().end);
                break;
            }
            case StmtKind::other_simple: break;
            }
        }
    }

    void plan_return(const Stmt& s) {
        if (std::string name = returned_name(s); !name.empty()) {
            add("return_val", name, AnchorKind::return_val, Placement::before_return, s, s.first_token().begin);
        } else {
            add("return_val", "return_val", AnchorKind::return_val, Placement::rewrite_return, s, s.last_token().end);
        }
    }

    void collect_loop_names(const std::vector<Stmt>& suite, std::vector<std::string>& out,
                            std::set<std::string>& for_targets) {
        for (const auto& s : suite) {
            if (s.kind == StmtKind::for_stmt) {
                for (auto& n : python::for_target_names(s)) for_targets.insert(n);
            } else if (!python::is_compound(s.kind)) {
                for (auto& n : python::assigned_names(s)) {
                    if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
                }
            }
            collect_loop_names(s.body, out, for_targets);
        }
    }

    void plan_post_loop(const Stmt& loop, const Stmt* orelse) {
        std::vector<std::string> names;
        std::set<std::string> for_targets;
        if (loop.kind == StmtKind::for_stmt) {
            for (auto& n : python::for_target_names(loop)) for_targets.insert(n);
        }
        collect_loop_names(loop.body, names, for_targets);
        if (orelse) collect_loop_names(orelse->body, names, for_targets);
        const Stmt& last = orelse ? *orelse : loop;
        for (const auto& n : names) {
            if (for_targets.count(n)) continue;
            auto it = first_binding_.find(n);
            // Only names bound before the loop are safe to print after it: a
            // loop that runs zero times would otherwise leave them unbound.
            if (it == first_binding_.end() || it->second >= loop.first_line()) continue;
            add(n, n, AnchorKind::post_loop, Placement::after_loop, last, last.end_of_last_line());
        }
    }

    const Stmt& def_;
    std::unordered_map<std::string, int> first_binding_;
    int seq_ = 0;
};

const Stmt* find_entry(const std::vector<Stmt>& body, const std::string& entry) {
    for (const auto& s : body) {
        const auto& toks = s.line->tokens;
        if (s.kind == StmtKind::async_stmt && toks.size() > 2 && toks[1].text == "def" && toks[2].text == entry) {
            throw UnsupportedConstruct("async entry function", s.first_line());
        }
        if (s.kind == StmtKind::def_stmt && toks.size() > 1 && toks[1].text == entry) return &s;
    }
    return nullptr;
}

class Emitter {
public:
    Emitter(const Planner& plan, std::string unit_indent, bool unroll)
        : plan_(plan), unit_(std::move(unit_indent)), unroll_(unroll) {}

    void emit(const std::vector<const PlannedAnchor*>& kept) {
        // Lines whose simple statements receive an anchor must be split into
        // one statement per physical line when they hold several statements
        // or an inline suite.
        std::set<const LogicalLine*> split;
        for (const auto* a : kept) {
            if (a->placement == Placement::after_loop) continue;
            if (a->placement == Placement::rewrite_return && !unroll_) {
                throw UnsupportedConstruct("return expression needs unrolling", a->stmt->first_line());
            }
            const LogicalLine* line = a->stmt->line;
            const bool crowded = plan_.inline_header_by_line.count(line) > 0 ||
                                 plan_.simple_by_line.at(line).size() > 1;
            if (crowded) {
                if (!unroll_) throw UnsupportedConstruct("one-liner needs unrolling", a->stmt->first_line());
                split.insert(line);
            }
        }
        for (const auto* line : split) add_split_edits(*line);
        for (const auto* a : kept) add_anchor_edits(*a, split.count(a->stmt->line) > 0);
    }

    std::vector<Edit> edits;

private:
    std::string segment_indent(const LogicalLine& line, bool split) const {
        if (split && plan_.inline_header_by_line.count(&line)) return line.indent + unit_;
        return line.indent;
    }

    void add_split_edits(const LogicalLine& line) {
        const std::string indent = segment_indent(line, true);
        const auto& segs = plan_.simple_by_line.at(&line);
        if (auto it = plan_.inline_header_by_line.find(&line); it != plan_.inline_header_by_line.end()) {
            const Token& colon = it->second->last_token();
            push(colon.end, segs.front()->first_token().begin, "\n" + indent, {}, 1);
        }
        for (std::size_t k = 0; k + 1 < segs.size(); ++k) {
            const Token& semi = line.tokens[segs[k]->tok_end];
            push(semi.begin, segs[k + 1]->first_token().begin, "\n" + indent, {}, 1);
        }
    }

    std::size_t after_offset(const Stmt& s, bool split) const {
        if (split && s.shares_line_with_next) return s.line->tokens[s.tok_end].begin;
        return s.line->line_end;
    }

    void add_anchor_edits(const PlannedAnchor& a, bool split) {
        const Stmt& s = *a.stmt;
        AnchorDecl decl{a.name, 0, a.kind};
        const std::string print = anchor_statement(a.name, a.expr);
        switch (a.placement) {
        case Placement::after_stmt: {
            const std::string indent = segment_indent(*s.line, split);
            push(after_offset(s, split), after_offset(s, split), "\n" + indent + print, {{1, decl}}, 0);
            break;
        }
        case Placement::after_loop: {
            const std::size_t at = s.end_of_last_line();
            push(at, at, "\n" + s.line->indent + print, {{1, decl}}, 0);
            break;
        }
        case Placement::before_return: {
            if (s.tok_begin == 0) {
                push(s.line->line_begin, s.line->line_begin, s.line->indent + print + "\n", {{0, decl}}, 0);
            } else {
                const std::size_t at = s.first_token().begin;
                push(at, at, print + "\n" + segment_indent(*s.line, split), {{0, decl}}, 0);
            }
            break;
        }
        case Placement::rewrite_return: {
            const Token& kw = s.first_token();
            const bool bare = s.tok_end - s.tok_begin == 1;
            push(kw.begin, kw.end, bare ? "return_val = None" : "return_val =", {}, 1);
            const std::string indent = segment_indent(*s.line, split);
            const std::size_t at = after_offset(s, split);
            push(at, at, "\n" + indent + print + "\n" + indent + "return return_val", {{1, decl}}, 0);
            break;
        }
        }
    }

    void push(std::size_t begin, std::size_t end, std::string text, std::vector<std::pair<int, AnchorDecl>> anchors,
              int replace_rank) {
        // Zero-length inserts sort before replacements starting at the same
        // offset; otherwise planning order is kept.
        edits.push_back({begin, end, std::move(text), std::move(anchors), seq_++ + replace_rank * 1'000'000});
    }

    const Planner& plan_;
    std::string unit_;
    bool unroll_;
    int seq_ = 0;
};

struct Rendered {
    std::string text;
    std::vector<AnchorDecl> anchors;
    LineMap line_map;
};

Rendered render(const std::string& src, std::vector<Edit> edits) {
    std::stable_sort(edits.begin(), edits.end(), [](const Edit& a, const Edit& b) {
        if (a.begin != b.begin) return a.begin < b.begin;
        return a.seq < b.seq;
    });
    Rendered out;
    std::vector<std::size_t> line_starts{0};
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i] == '\n' && i + 1 < src.size()) line_starts.push_back(i + 1);
    }
    std::size_t next_line = 0;
    int out_line = 1;
    std::size_t pos = 0;

    auto record_starts_until = [&](std::size_t limit_exclusive) {
        while (next_line < line_starts.size() && line_starts[next_line] < limit_exclusive) {
            out.line_map.pairs.emplace_back(static_cast<int>(next_line) + 1, out_line);
            ++next_line;
        }
    };
    auto copy_until = [&](std::size_t stop) {
        while (pos < stop) {
            if (next_line < line_starts.size() && line_starts[next_line] == pos) {
                out.line_map.pairs.emplace_back(static_cast<int>(next_line) + 1, out_line);
                ++next_line;
            }
            out.text.push_back(src[pos]);
            if (src[pos] == '\n') ++out_line;
            ++pos;
        }
    };

    for (const auto& e : edits) {
        if (e.begin < pos) throw std::logic_error("overlapping instrumentation edits");
        copy_until(e.begin);
        for (const auto& [rel, decl] : e.anchors) {
            AnchorDecl d = decl;
            d.line = out_line + rel;
            out.anchors.push_back(std::move(d));
        }
        for (char c : e.text) {
            out.text.push_back(c);
            if (c == '\n') ++out_line;
        }
        if (e.end > e.begin) {
            // Line starts swallowed by a replacement land where the
            // replacement ends.
            record_starts_until(e.end);
            pos = e.end;
        }
    }
    copy_until(src.size());
    record_starts_until(src.size() + 1);
    std::sort(out.anchors.begin(), out.anchors.end(),
              [](const AnchorDecl& a, const AnchorDecl& b) { return a.line < b.line; });
    return out;
}

}  // namespace

std::string anchor_statement(std::string_view name, std::string_view expr) {
    std::string s = "print(f'";
    s += name;
    s += ": {";
    s += expr;
    s += "}')";
    return s;
}

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

InstrumentedProgram instrument(const SourceProgram& program, const InstrumentationConfig& config) {
    if (config.dropout_rate < 0.0 || config.dropout_rate > 1.0) {
        throw std::invalid_argument("dropout_rate must lie in [0, 1]");
    }
    if (config.max_static_anchors < 1) throw std::invalid_argument("max_static_anchors must be >= 1");
    if (trim(program.source_text).empty()) throw ParseError("empty source");

    auto module = python::parse_module(program.source_text);
    const Stmt* def = find_entry(module->body, program.entry_name);
    if (!def) throw ParseError("entry function '" + program.entry_name + "' not found");

    // Generators and coroutines do not return through `return`.
    for (const auto& name : {"yield", "await"}) {
        if (contains_token(*def, name)) throw UnsupportedConstruct(std::string(name) + " in entry function", def->first_line());
    }

    std::string unit = "    ";
    if (!def->inline_body && !def->body.empty()) {
        const std::string& body_indent = def->body.front().line->indent;
        const std::string& def_indent = def->line->indent;
        if (body_indent.size() > def_indent.size() && body_indent.compare(0, def_indent.size(), def_indent) == 0) {
            unit = body_indent.substr(def_indent.size());
        }
    }

    Planner planner(*def, python::parameter_names(*def));
    planner.run();

    std::vector<const PlannedAnchor*> ordered;
    for (const auto& a : planner.anchors) ordered.push_back(&a);
    std::stable_sort(ordered.begin(), ordered.end(), [](const PlannedAnchor* a, const PlannedAnchor* b) {
        if (a->position != b->position) return a->position < b->position;
        return a->seq < b->seq;
    });

    std::vector<const PlannedAnchor*> kept;
    std::mt19937_64 rng(config.rng_seed);
    for (const auto* a : ordered) {
        if (a->kind != AnchorKind::return_val && config.dropout_rate > 0.0) {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            if (u < config.dropout_rate) continue;
        }
        kept.push_back(a);
    }
    if (kept.size() > config.max_static_anchors) throw TooManyAnchors(kept.size(), config.max_static_anchors);

    Emitter emitter(planner, unit, config.unroll_oneliners);
    emitter.emit(kept);
    Rendered r = render(module->source, std::move(emitter.edits));

    InstrumentedProgram out;
    out.origin_id = program.id;
    out.entry_name = program.entry_name;
    out.source_text = std::move(r.text);
    out.anchors = std::move(r.anchors);
    out.line_map = std::move(r.line_map);
    return out;
}

std::size_t count_static_anchors(const InstrumentedProgram& program) { return program.anchors.size(); }

}  // namespace trace_forge
