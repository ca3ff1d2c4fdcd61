#include "trace_forge/python_source.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>

#include "trace_forge/errors.hpp"

namespace trace_forge::python {
namespace {

bool is_name_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool is_name_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

bool is_string_prefix(std::string_view name) {
    std::string lower;
    for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    static constexpr std::array<std::string_view, 8> prefixes{"r", "u", "b", "f", "br", "rb", "fr", "rf"};
    return std::find(prefixes.begin(), prefixes.end(), lower) != prefixes.end();
}

constexpr std::array<std::string_view, 5> kOps3{"**=", "//=", ">>=", "<<=", "..."};
constexpr std::array<std::string_view, 21> kOps2{"==", "!=", "<=", ">=", "->", "+=", "-=", "*=", "/=", "%=", "&=",
                                                "|=", "^=", "@=", "**", "//", "<<", ">>", ":=", "<>", "!="};
constexpr std::string_view kOps1 = "+-*/%@&|^~<>()[]{},:.;=";

class Tokenizer {
public:
    explicit Tokenizer(std::string_view src) : src_(src) {}

    std::vector<LogicalLine> run() {
        const std::size_t n = src_.size();
        while (pos_ < n) {
            if (!in_line_) {
                if (!begin_physical_line()) continue;
            }
            const char c = src_[pos_];
            if (c == ' ' || c == '\t' || c == '\f') {
                ++pos_;
            } else if (c == '#') {
                while (pos_ < n && src_[pos_] != '\n') ++pos_;
            } else if (c == '\\' && (peek(1) == '\n' || (peek(1) == '\r' && peek(2) == '\n'))) {
                pos_ += peek(1) == '\r' ? 3 : 2;
                ++line_;
            } else if (c == '\r') {
                ++pos_;
            } else if (c == '\n') {
                if (brackets_.empty()) finish_line(pos_ > 0 && src_[pos_ - 1] == '\r' ? pos_ - 1 : pos_);
                ++pos_;
                ++line_;
            } else if (c == '"' || c == '\'') {
                scan_string(pos_);
            } else if (is_name_start(static_cast<unsigned char>(c))) {
                scan_name();
            } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                       (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
                scan_number();
            } else {
                scan_op();
            }
        }
        if (in_line_) {
            if (!brackets_.empty()) throw ParseError("unexpected end of input inside brackets", line_);
            std::size_t end = n;
            if (end > 0 && src_[end - 1] == '\r') --end;
            finish_line(end);
        } else if (!brackets_.empty()) {
            throw ParseError("unexpected end of input inside brackets", line_);
        }
        return std::move(lines_);
    }

private:
    char peek(std::size_t k) const { return pos_ + k < src_.size() ? src_[pos_ + k] : '\0'; }

    // Returns false when the physical line is blank or comment-only (and was
    // consumed).
    bool begin_physical_line() {
        std::size_t j = pos_;
        int width = 0;
        while (j < src_.size() && (src_[j] == ' ' || src_[j] == '\t' || src_[j] == '\f')) {
            if (src_[j] == '\t') width = (width / 8 + 1) * 8;
            else if (src_[j] == ' ') ++width;
            ++j;
        }
        if (j >= src_.size()) {
            pos_ = j;
            return false;
        }
        if (src_[j] == '\n' || src_[j] == '\r' || src_[j] == '#') {
            while (j < src_.size() && src_[j] != '\n') ++j;
            if (j < src_.size()) ++line_;
            pos_ = j + 1;
            return false;
        }
        cur_ = LogicalLine{};
        cur_.indent = std::string(src_.substr(pos_, j - pos_));
        cur_.indent_width = width;
        cur_.first_line = line_;
        cur_.line_begin = pos_;
        in_line_ = true;
        pos_ = j;
        return true;
    }

    void finish_line(std::size_t end) {
        if (cur_.tokens.empty()) {
            in_line_ = false;
            return;
        }
        cur_.last_line = line_;
        cur_.line_end = end;
        lines_.push_back(std::move(cur_));
        in_line_ = false;
    }

    void push(TokenKind kind, std::size_t begin, std::size_t end, int line) {
        Token t;
        t.kind = kind;
        t.text = std::string(src_.substr(begin, end - begin));
        t.begin = begin;
        t.end = end;
        t.line = line;
        t.depth = static_cast<int>(brackets_.size());
        cur_.tokens.push_back(std::move(t));
    }

    void scan_string(std::size_t token_begin) {
        const int start_line = line_;
        const char quote = src_[pos_];
        const bool triple = peek(1) == quote && peek(2) == quote;
        pos_ += triple ? 3 : 1;
        while (true) {
            if (pos_ >= src_.size()) throw ParseError("unterminated string literal", start_line);
            const char c = src_[pos_];
            if (c == '\\') {
                if (peek(1) == '\n') ++line_;
                pos_ += 2;
                continue;
            }
            if (c == '\n') {
                if (!triple) throw ParseError("unterminated string literal", start_line);
                ++line_;
                ++pos_;
                continue;
            }
            if (c == quote) {
                if (!triple) {
                    ++pos_;
                    break;
                }
                if (peek(1) == quote && peek(2) == quote) {
                    pos_ += 3;
                    break;
                }
            }
            ++pos_;
        }
        push(TokenKind::string, token_begin, pos_, start_line);
    }

    void scan_name() {
        const std::size_t begin = pos_;
        while (pos_ < src_.size() && is_name_char(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        if (pos_ < src_.size() && (src_[pos_] == '"' || src_[pos_] == '\'') &&
            is_string_prefix(src_.substr(begin, pos_ - begin))) {
            scan_string(begin);
            return;
        }
        push(TokenKind::name, begin, pos_, line_);
    }

    void scan_number() {
        const std::size_t begin = pos_;
        while (pos_ < src_.size()) {
            const char c = src_[pos_];
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
                ++pos_;
            } else if ((c == '+' || c == '-') && (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E') &&
                       !(src_[begin] == '0' && pos_ - begin > 1 &&
                         (src_[begin + 1] == 'x' || src_[begin + 1] == 'X'))) {
                ++pos_;
            } else {
                break;
            }
        }
        push(TokenKind::number, begin, pos_, line_);
    }

    void scan_op() {
        const std::string_view rest = src_.substr(pos_);
        for (auto op : kOps3) {
            if (rest.substr(0, 3) == op) return emit_op(3);
        }
        for (auto op : kOps2) {
            if (rest.substr(0, 2) == op) return emit_op(2);
        }
        if (kOps1.find(rest[0]) != std::string_view::npos) return emit_op(1);
        throw ParseError(std::string("invalid character '") + rest[0] + "'", line_);
    }

    void emit_op(std::size_t len) {
        const char c = src_[pos_];
        if (c == '(' || c == '[' || c == '{') {
            push(TokenKind::op, pos_, pos_ + len, line_);
            brackets_.push_back(c);
        } else if (c == ')' || c == ']' || c == '}') {
            const char open = c == ')' ? '(' : c == ']' ? '[' : '{';
            if (brackets_.empty() || brackets_.back() != open) {
                throw ParseError(std::string("unmatched '") + c + "'", line_);
            }
            brackets_.pop_back();
            push(TokenKind::op, pos_, pos_ + len, line_);
        } else {
            push(TokenKind::op, pos_, pos_ + len, line_);
        }
        pos_ += len;
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    bool in_line_ = false;
    LogicalLine cur_;
    std::vector<char> brackets_;
    std::vector<LogicalLine> lines_;
};

bool is_aug_op(const Token& t) {
    static constexpr std::array<std::string_view, 13> ops{"+=", "-=", "*=", "/=", "//=", "%=", "**=",
                                                           ">>=", "<<=", "&=", "|=", "^=", "@="};
    return t.kind == TokenKind::op && std::find(ops.begin(), ops.end(), t.text) != ops.end();
}

bool is_name(const Token& t, std::string_view text) { return t.kind == TokenKind::name && t.text == text; }
bool is_op(const Token& t, std::string_view text) { return t.kind == TokenKind::op && t.text == text; }

bool is_keyword(std::string_view s) {
    static constexpr std::array<std::string_view, 35> kws{
        "False",  "None",   "True",    "and",      "as",       "assert", "async", "await", "break",
        "class",  "continue", "def",   "del",      "elif",     "else",   "except", "finally", "for",
        "from",   "global", "if",      "import",   "in",       "is",     "lambda", "nonlocal", "not",
        "or",     "pass",   "raise",   "return",   "try",      "while",  "with",  "yield"};
    return std::find(kws.begin(), kws.end(), s) != kws.end();
}

std::optional<StmtKind> compound_kind(const LogicalLine& line, std::size_t start) {
    const Token& t = line.tokens[start];
    if (t.kind == TokenKind::op && t.text == "@") return StmtKind::decorator;
    if (t.kind != TokenKind::name) return std::nullopt;
    const std::string& w = t.text;
    if (w == "def") return StmtKind::def_stmt;
    if (w == "class") return StmtKind::class_stmt;
    if (w == "if") return StmtKind::if_stmt;
    if (w == "elif") return StmtKind::elif_clause;
    if (w == "else") return StmtKind::else_clause;
    if (w == "for") return StmtKind::for_stmt;
    if (w == "while") return StmtKind::while_stmt;
    if (w == "with") return StmtKind::with_stmt;
    if (w == "try") return StmtKind::try_stmt;
    if (w == "except") return StmtKind::except_clause;
    if (w == "finally") return StmtKind::finally_clause;
    if (w == "async") return StmtKind::async_stmt;
    if ((w == "match" || w == "case") && start == 0 && line.tokens.size() > 2 &&
        is_op(line.tokens.back(), ":") && line.tokens.back().depth == 0) {
        const Token& second = line.tokens[1];
        const bool looks_simple = second.kind == TokenKind::op &&
                                  (second.text == "=" || second.text == "." || second.text == ":" ||
                                   second.text == "," || is_aug_op(second));
        if (!looks_simple) return StmtKind::match_stmt;
    }
    return std::nullopt;
}

StmtKind classify_simple(const LogicalLine& line, std::size_t begin, std::size_t end) {
    const auto& toks = line.tokens;
    if (is_name(toks[begin], "return")) return StmtKind::return_stmt;
    for (std::size_t i = begin; i < end; ++i) {
        const Token& t = toks[i];
        if (t.depth != 0) continue;
        if (is_name(t, "lambda")) break;
        if (is_op(t, ":")) return StmtKind::ann_assign;
        if (is_aug_op(t)) return StmtKind::aug_assign;
        if (is_op(t, "=")) return StmtKind::assign;
    }
    return StmtKind::other_simple;
}

class TreeBuilder {
public:
    explicit TreeBuilder(Module& m) : m_(m) {}

    std::vector<Stmt> build() {
        if (m_.lines.empty()) return {};
        if (m_.lines.front().indent_width != 0) throw ParseError("unexpected indent", m_.lines.front().first_line);
        auto body = parse_block(0);
        if (idx_ < m_.lines.size()) throw ParseError("unindent does not match any outer level", m_.lines[idx_].first_line);
        return body;
    }

private:
    std::vector<Stmt> parse_block(int width) {
        std::vector<Stmt> out;
        while (idx_ < m_.lines.size()) {
            const LogicalLine& line = m_.lines[idx_];
            if (line.indent_width < width) break;
            if (line.indent_width > width) throw ParseError("unexpected indent", line.first_line);
            ++idx_;
            auto stmts = parse_line(line);
            Stmt& last = stmts.back();
            if (is_compound(last.kind) && last.kind != StmtKind::decorator && !last.inline_body) {
                if (idx_ >= m_.lines.size() || m_.lines[idx_].indent_width <= width) {
                    throw ParseError("expected an indented block", line.first_line);
                }
                last.body = parse_block(m_.lines[idx_].indent_width);
                if (idx_ < m_.lines.size() && m_.lines[idx_].indent_width > width) {
                    throw ParseError("unindent does not match any outer level", m_.lines[idx_].first_line);
                }
            }
            for (auto& s : stmts) out.push_back(std::move(s));
        }
        return out;
    }

    std::vector<Stmt> parse_line(const LogicalLine& line) {
        if (auto kind = compound_kind(line, 0)) {
            Stmt s;
            s.kind = *kind;
            s.line = &line;
            s.tok_begin = 0;
            if (*kind == StmtKind::decorator) {
                s.tok_end = line.tokens.size();
                return {std::move(s)};
            }
            std::size_t colon = line.tokens.size();
            for (std::size_t i = 0; i < line.tokens.size(); ++i) {
                const Token& t = line.tokens[i];
                if (t.depth == 0 && is_op(t, ":")) {
                    colon = i;
                    break;
                }
                if (t.depth == 0 && is_name(t, "lambda") && *kind != StmtKind::def_stmt) {
                    // header colon comes after the lambda's own colon
                    for (++i; i < line.tokens.size() && !(line.tokens[i].depth == 0 && is_op(line.tokens[i], ":")); ++i) {
                    }
                }
            }
            if (colon == line.tokens.size()) throw ParseError("expected ':'", line.first_line);
            s.tok_end = colon + 1;
            if (colon + 1 < line.tokens.size()) {
                s.inline_body = true;
                s.body = parse_simple_seq(line, colon + 1);
            }
            return {std::move(s)};
        }
        return parse_simple_seq(line, 0);
    }

    std::vector<Stmt> parse_simple_seq(const LogicalLine& line, std::size_t start) {
        std::vector<Stmt> out;
        std::size_t seg = start;
        const auto& toks = line.tokens;
        for (std::size_t i = start; i <= toks.size(); ++i) {
            const bool boundary = i == toks.size() || (toks[i].depth == 0 && is_op(toks[i], ";"));
            if (!boundary) continue;
            if (i > seg) {
                if (compound_kind(line, seg) && seg != 0) {
                    throw ParseError("compound statement after ';' or ':'", toks[seg].line);
                }
                Stmt s;
                s.kind = classify_simple(line, seg, i);
                s.line = &line;
                s.tok_begin = seg;
                s.tok_end = i;
                out.push_back(std::move(s));
            } else if (i < toks.size()) {
                throw ParseError("empty statement before ';'", toks[i].line);
            }
            seg = i + 1;
        }
        for (std::size_t k = 0; k + 1 < out.size(); ++k) out[k].shares_line_with_next = true;
        if (out.empty()) throw ParseError("expected a statement", line.first_line);
        return out;
    }

    Module& m_;
    std::size_t idx_ = 0;
};

// Names bound by a target token range.
void collect_target_names(const std::vector<Token>& toks, std::size_t begin, std::size_t end,
                          std::vector<std::string>& out) {
    for (std::size_t i = begin; i < end; ++i) {
        const Token& t = toks[i];
        if (t.kind == TokenKind::op && (t.text == "(" || t.text == "[")) {
            const bool trailer = i > begin && (toks[i - 1].kind == TokenKind::name || toks[i - 1].kind == TokenKind::string ||
                                               is_op(toks[i - 1], ")") || is_op(toks[i - 1], "]"));
            if (trailer && !(toks[i - 1].kind == TokenKind::name && is_keyword(toks[i - 1].text))) {
                // subscript or call: skip to the matching closer
                int depth = 0;
                for (; i < end; ++i) {
                    if (is_op(toks[i], "(") || is_op(toks[i], "[") || is_op(toks[i], "{")) ++depth;
                    if (is_op(toks[i], ")") || is_op(toks[i], "]") || is_op(toks[i], "}")) {
                        if (--depth == 0) break;
                    }
                }
            }
            continue;
        }
        if (t.kind != TokenKind::name || is_keyword(t.text)) continue;
        const bool after_dot = i > begin && is_op(toks[i - 1], ".");
        const bool before_trailer = i + 1 < end && (is_op(toks[i + 1], ".") || is_op(toks[i + 1], "[") ||
                                                    is_op(toks[i + 1], "("));
        if (!after_dot && !before_trailer) out.push_back(t.text);
    }
}

}  // namespace

bool is_compound(StmtKind kind) {
    switch (kind) {
    case StmtKind::assign:
    case StmtKind::aug_assign:
    case StmtKind::ann_assign:
    case StmtKind::return_stmt:
    case StmtKind::other_simple: return false;
    default: return true;
    }
}

int Stmt::last_line() const {
    if (is_compound(kind) && !inline_body && !body.empty()) return body.back().last_line();
    return line->last_line;
}

std::size_t Stmt::end_of_last_line() const {
    if (is_compound(kind) && !inline_body && !body.empty()) return body.back().end_of_last_line();
    return line->line_end;
}

std::vector<LogicalLine> tokenize(std::string_view source) { return Tokenizer(source).run(); }

std::unique_ptr<Module> parse_module(std::string source) {
    auto m = std::make_unique<Module>();
    m->source = std::move(source);
    m->lines = tokenize(m->source);
    m->body = TreeBuilder(*m).build();
    return m;
}

std::vector<std::string> assigned_names(const Stmt& stmt) {
    std::vector<std::string> out;
    const auto& toks = stmt.line->tokens;
    switch (stmt.kind) {
    case StmtKind::assign: {
        std::size_t seg = stmt.tok_begin;
        for (std::size_t i = stmt.tok_begin; i < stmt.tok_end; ++i) {
            if (toks[i].depth == 0 && is_name(toks[i], "lambda")) break;
            if (toks[i].depth == 0 && is_op(toks[i], "=")) {
                collect_target_names(toks, seg, i, out);
                seg = i + 1;
            }
        }
        break;
    }
    case StmtKind::aug_assign:
    case StmtKind::ann_assign: {
        std::size_t i = stmt.tok_begin;
        while (i < stmt.tok_end && !(toks[i].depth == 0 && (is_aug_op(toks[i]) || is_op(toks[i], ":")))) ++i;
        const bool has_value = stmt.kind == StmtKind::aug_assign ||
                               std::any_of(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                           toks.begin() + static_cast<std::ptrdiff_t>(stmt.tok_end),
                                           [](const Token& t) { return t.depth == 0 && is_op(t, "="); });
        if (has_value && i == stmt.tok_begin + 1 && toks[stmt.tok_begin].kind == TokenKind::name) {
            out.push_back(toks[stmt.tok_begin].text);
        }
        break;
    }
    default: break;
    }
    return out;
}

std::string single_assigned_name(const Stmt& stmt) {
    const auto& toks = stmt.line->tokens;
    if (stmt.kind == StmtKind::assign) {
        const std::size_t b = stmt.tok_begin;
        if (stmt.tok_end - b < 3) return {};
        if (toks[b].kind != TokenKind::name || is_keyword(toks[b].text) || !is_op(toks[b + 1], "=")) return {};
        for (std::size_t i = b + 2; i < stmt.tok_end; ++i) {
            if (toks[i].depth == 0 && is_name(toks[i], "lambda")) break;
            if (toks[i].depth == 0 && is_op(toks[i], "=")) return {};  // chained targets
        }
        return toks[b].text;
    }
    if (stmt.kind == StmtKind::aug_assign || stmt.kind == StmtKind::ann_assign) {
        auto names = assigned_names(stmt);
        return names.size() == 1 ? names.front() : std::string{};
    }
    return {};
}

std::vector<std::string> for_target_names(const Stmt& stmt) {
    std::vector<std::string> out;
    const auto& toks = stmt.line->tokens;
    std::size_t b = stmt.tok_begin;
    if (is_name(toks[b], "async")) ++b;
    if (!is_name(toks[b], "for")) return out;
    std::size_t e = b + 1;
    while (e < stmt.tok_end && !(toks[e].depth == 0 && is_name(toks[e], "in"))) ++e;
    collect_target_names(toks, b + 1, e, out);
    return out;
}

std::vector<std::string> parameter_names(const Stmt& def) {
    std::vector<std::string> out;
    const auto& toks = def.line->tokens;
    for (std::size_t i = def.tok_begin; i < def.tok_end; ++i) {
        const Token& t = toks[i];
        if (t.depth != 1 || t.kind != TokenKind::name || is_keyword(t.text)) continue;
        const Token& prev = toks[i - 1];
        if (is_op(prev, "(") || is_op(prev, ",") || is_op(prev, "*") || is_op(prev, "**")) out.push_back(t.text);
    }
    return out;
}

}  // namespace trace_forge::python
