#pragma once

// Structural model of subject-language (Python) source: a tokenizer that
// understands strings, comments, brackets and continuations, grouped into
// logical lines and an indentation-based statement tree. It recovers
// statement boundaries and kinds; it does not build expression trees.

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace trace_forge::python {

enum class TokenKind { name, number, string, op };

struct Token {
    TokenKind kind;
    std::string text;
    std::size_t begin = 0;  // byte offsets into the source
    std::size_t end = 0;
    int line = 0;  // 1-based physical line of the first byte
    int depth = 0;  // bracket depth before this token
};

struct LogicalLine {
    std::vector<Token> tokens;
    int first_line = 0;
    int last_line = 0;
    std::string indent;  // leading whitespace of the first physical line
    int indent_width = 0;  // tabs expand to the next multiple of 8
    std::size_t line_begin = 0;  // offset of the first physical line start
    std::size_t line_end = 0;  // offset just before the final newline (or EOF)
};

/// Splits `source` into logical lines. Throws ParseError on unterminated
/// strings, unbalanced brackets or stray characters.
std::vector<LogicalLine> tokenize(std::string_view source);

enum class StmtKind {
    // compound
    def_stmt,
    class_stmt,
    if_stmt,
    elif_clause,
    else_clause,
    for_stmt,
    while_stmt,
    with_stmt,
    try_stmt,
    except_clause,
    finally_clause,
    async_stmt,
    match_stmt,
    decorator,
    // simple
    assign,
    aug_assign,
    ann_assign,
    return_stmt,
    other_simple,
};

bool is_compound(StmtKind kind);

/// A statement. Simple statements are a token range within a logical line
/// (several may share one line via ';' or an inline suite). Compound
/// statements own a header token range ending at the header colon and a body
/// that is either inline (same logical line) or an indented block.
struct Stmt {
    StmtKind kind = StmtKind::other_simple;
    const LogicalLine* line = nullptr;
    std::size_t tok_begin = 0;
    std::size_t tok_end = 0;  // one past the last token (excluding ';')
    bool inline_body = false;
    std::vector<Stmt> body;

    const Token& first_token() const { return line->tokens[tok_begin]; }
    const Token& last_token() const { return line->tokens[tok_end - 1]; }
    int first_line() const { return first_token().line; }
    /// Last physical line covered, including an indented body.
    int last_line() const;
    /// Offset just past the last byte on the statement's final physical line
    /// (before the newline). For an indented body this is the end of the body.
    std::size_t end_of_last_line() const;
    /// True when this statement shares its logical line with a following
    /// statement (separated by ';').
    bool shares_line_with_next = false;
};

struct Module {
    std::string source;
    std::vector<LogicalLine> lines;
    std::vector<Stmt> body;
};

/// Tokenizes and builds the statement tree. The returned module owns the
/// logical lines referenced by every Stmt, so it must outlive them; it is
/// returned by unique ownership to keep those pointers stable.
std::unique_ptr<Module> parse_module(std::string source);

/// Simple-name targets bound by an assignment-like statement, in order
/// (`a = b = 1` yields a, b; `a, (b, c) = ...` yields a, b, c; subscripts and
/// attributes yield nothing).
std::vector<std::string> assigned_names(const Stmt& stmt);
/// The single simple name assigned by `stmt`, or empty when the target is
/// anything else (tuple, attribute, subscript, several targets, bare
/// annotation).
std::string single_assigned_name(const Stmt& stmt);
/// Names bound by a `for` header target.
std::vector<std::string> for_target_names(const Stmt& stmt);
/// Parameter names of a `def` header.
std::vector<std::string> parameter_names(const Stmt& def);

}  // namespace trace_forge::python
