#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace trace_forge {

// Base of every error the library throws. Each subclass carries a short
// machine-readable code so the CLI and the pipeline can log rejections.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

class ParseError : public Error {
public:
    ParseError(const std::string& message, int line = 0)
        : Error("parse_error", line > 0 ? "line " + std::to_string(line) + ": " + message : message),
          line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

class UnsupportedConstruct : public Error {
public:
    UnsupportedConstruct(const std::string& what, int line)
        : Error("unsupported_construct", "line " + std::to_string(line) + ": " + what), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

class TooManyAnchors : public Error {
public:
    TooManyAnchors(std::size_t count, std::size_t limit)
        : Error("too_many_anchors", std::to_string(count) + " static anchors exceed the limit of " +
                                        std::to_string(limit)),
          count_(count) {}
    std::size_t count() const noexcept { return count_; }

private:
    std::size_t count_;
};

class ExecutionFailed : public Error {
public:
    ExecutionFailed(std::string status, const std::string& detail)
        : Error("execution_failed", status + (detail.empty() ? "" : ": " + detail)),
          status_(std::move(status)) {}
    const std::string& status() const noexcept { return status_; }

private:
    std::string status_;
};

class TraceParseError : public Error {
public:
    explicit TraceParseError(const std::string& line)
        : Error("trace_parse_error", "stdout line is not an anchor event: " + line) {}
};

class UnbalancedTags : public Error {
public:
    explicit UnbalancedTags(const std::string& message) : Error("unbalanced_tags", message) {}
};

// A tag-balanced response whose block sequence does not fit the task's
// shape.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& reason) : Error("shape_error", reason) {}
};

class GroupTooSmall : public Error {
public:
    explicit GroupTooSmall(std::size_t g)
        : Error("group_too_small", "group size " + std::to_string(g) + " < 2") {}
};

class ShapeMismatch : public Error {
public:
    explicit ShapeMismatch(const std::string& message) : Error("shape_mismatch", message) {}
};

class NonFinite : public Error {
public:
    explicit NonFinite(const std::string& message) : Error("non_finite", message) {}
};

class LineOutOfRange : public Error {
public:
    LineOutOfRange(int line, std::size_t index)
        : Error("line_out_of_range",
                "query " + std::to_string(index) + ": line " + std::to_string(line) + " outside the line map"),
          line_(line), index_(index) {}
    int line() const noexcept { return line_; }
    std::size_t index() const noexcept { return index_; }

private:
    int line_;
    std::size_t index_;
};

class EmptySet : public Error {
public:
    explicit EmptySet(const std::string& what) : Error("empty_set", what + " is empty") {}
};

// Malformed JSONL record or a cross-file inconsistency. `record_id` is the
// offending id when known.
class RecordError : public Error {
public:
    RecordError(const std::string& message, std::string record_id = {})
        : Error("record_error", message), record_id_(std::move(record_id)) {}
    const std::string& record_id() const noexcept { return record_id_; }

private:
    std::string record_id_;
};

}  // namespace trace_forge
