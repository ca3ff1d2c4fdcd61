#pragma once

// JSONL record schemas shared by every subcommand. One record per line,
// UTF-8, field names fixed.

#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "trace_forge/core_model.hpp"
#include "trace_forge/errors.hpp"

namespace trace_forge {

using Json = nlohmann::json;

void to_json(Json& j, const SourceProgram& p);
void from_json(const Json& j, SourceProgram& p);

void to_json(Json& j, const AnchorDecl& a);
void from_json(const Json& j, AnchorDecl& a);

void to_json(Json& j, const InstrumentedProgram& p);
void from_json(const Json& j, InstrumentedProgram& p);

void to_json(Json& j, const ExecutionTrace& t);
void from_json(const Json& j, ExecutionTrace& t);

void to_json(Json& j, const Trajectory& t);
void from_json(const Json& j, Trajectory& t);

void to_json(Json& j, const TaskInstance& t);
void from_json(const Json& j, TaskInstance& t);

/// Reads every non-blank line of `in` as JSON. Throws RecordError with the
/// 1-based line number on malformed input.
std::vector<Json> read_jsonl(std::istream& in);
/// `path` may be "-" for stdin.
std::vector<Json> read_jsonl_file(const std::string& path);

void write_jsonl_line(std::ostream& out, const Json& record);

/// Decodes a record, turning nlohmann type/key errors into RecordError that
/// names the record's id when one is present.
template <typename T>
T decode_record(const Json& j) {
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception& e) {
        std::string id;
        for (const char* key : {"id", "origin_id", "instance_id"}) {
            if (j.is_object() && j.contains(key) && j[key].is_string()) {
                id = j[key].get<std::string>();
                break;
            }
        }
        throw RecordError(std::string("malformed record: ") + e.what(), id);
    }
}

}  // namespace trace_forge
