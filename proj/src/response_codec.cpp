#include "trace_forge/response_codec.hpp"

#include <array>

#include "trace_forge/errors.hpp"

namespace trace_forge {
namespace {

constexpr std::array<BlockTag, 4> kTags{BlockTag::reasoning, BlockTag::print, BlockTag::input, BlockTag::answer};

std::string open_tag(BlockTag t) { return "<" + std::string(to_string(t)) + ">"; }
std::string close_tag(BlockTag t) { return "</" + std::string(to_string(t)) + ">"; }

// Tag starting at `pos`, if any: (tag, is_close, length).
struct TagHit {
    BlockTag tag;
    bool close;
    std::size_t length;
};

std::optional<TagHit> tag_at(std::string_view text, std::size_t pos) {
    for (BlockTag t : kTags) {
        const std::string o = open_tag(t);
        if (text.substr(pos, o.size()) == o) return TagHit{t, false, o.size()};
        const std::string c = close_tag(t);
        if (text.substr(pos, c.size()) == c) return TagHit{t, true, c.size()};
    }
    return std::nullopt;
}

void check_output_shape(const std::vector<Block>& blocks, std::size_t start) {
    if (blocks.size() <= start) throw ShapeError("missing answer");
    for (std::size_t i = start; i < blocks.size(); i += 2) {
        if (blocks[i].tag != BlockTag::reasoning) {
            throw ShapeError(std::string(to_string(blocks[i].tag)) + " without preceding reasoning");
        }
        if (i + 1 >= blocks.size()) throw ShapeError("missing answer");
        const BlockTag next = blocks[i + 1].tag;
        const bool last = i + 2 >= blocks.size();
        if (next == BlockTag::answer && !last) throw ShapeError("answer not last");
        if (next == BlockTag::input) throw ShapeError("unexpected input block");
        if (next == BlockTag::reasoning) throw ShapeError("consecutive reasoning blocks");
        if (last && next != BlockTag::answer) throw ShapeError("missing answer");
    }
}

}  // namespace

void validate_shape(const Trajectory& t, TaskKind kind) {
    const auto& b = t.blocks;
    if (kind == TaskKind::output_prediction) {
        check_output_shape(b, 0);
        return;
    }
    if (b.size() < 2 || b[0].tag != BlockTag::reasoning || b[1].tag != BlockTag::input) {
        throw ShapeError("missing input commitment");
    }
    check_output_shape(b, 2);
}

bool is_well_shaped(const Trajectory& t) {
    const bool commits = t.blocks.size() > 1 && t.blocks[1].tag == BlockTag::input;
    try {
        validate_shape(t, commits ? TaskKind::input_prediction : TaskKind::output_prediction);
        return true;
    } catch (const ShapeError&) {
        return false;
    }
}

ParsedResponse parse_response(std::string_view text, TaskKind kind, std::string instance_id) {
    ParsedResponse out;
    out.trajectory.instance_id = std::move(instance_id);
    std::size_t pos = 0;
    while ((pos = text.find('<', pos)) != std::string_view::npos) {
        const auto hit = tag_at(text, pos);
        if (!hit) {
            ++pos;
            continue;
        }
        if (hit->close) {
            throw UnbalancedTags("closing " + close_tag(hit->tag) + " without an opening tag at offset " +
                                 std::to_string(pos));
        }
        const std::size_t body = pos + hit->length;
        const std::string closing = close_tag(hit->tag);
        const std::size_t end = text.find(closing, body);
        if (end == std::string_view::npos) {
            throw UnbalancedTags("unterminated " + open_tag(hit->tag) + " at offset " + std::to_string(pos));
        }
        // Blocks do not nest: any other tag inside the payload is an error.
        for (std::size_t p = text.find('<', body); p != std::string_view::npos && p < end; p = text.find('<', p + 1)) {
            if (auto inner = tag_at(text, p)) {
                throw UnbalancedTags(std::string(inner->close ? close_tag(inner->tag) : open_tag(inner->tag)) +
                                     " inside " + open_tag(hit->tag) + " at offset " + std::to_string(p));
            }
        }
        out.trajectory.blocks.push_back({hit->tag, std::string(trim(text.substr(body, end - body)))});
        pos = end + closing.size();
    }
    try {
        validate_shape(out.trajectory, kind);
    } catch (const ShapeError& e) {
        out.malformed = e.what();
    }
    return out;
}

std::string serialize_target(const ExecutionTrace& trace, std::string_view target, TaskKind kind,
                             std::string_view gt_input) {
    std::string out;
    auto block = [&](BlockTag tag, std::string_view payload) {
        out += open_tag(tag);
        out += payload;
        out += close_tag(tag);
        out += '\n';
    };
    if (kind == TaskKind::input_prediction) {
        block(BlockTag::reasoning, "");
        block(BlockTag::input, gt_input);
    }
    for (const auto& e : trace.events) {
        block(BlockTag::reasoning, "");
        block(BlockTag::print, e.name + ": " + e.value);
    }
    block(BlockTag::reasoning, "");
    block(BlockTag::answer, target);
    return out;
}

std::vector<PrintPair> extract_print_pairs(const Trajectory& t) {
    std::vector<PrintPair> pairs;
    for (const auto& payload : t.predicted_states()) {
        auto sep = payload.find(": ");
        std::string value;
        if (sep != std::string::npos) {
            value = payload.substr(sep + 2);
        } else if (!payload.empty() && payload.back() == ':') {
            // "name: " with an empty value loses its space to trimming.
            sep = payload.size() - 1;
        } else {
            pairs.push_back({"", payload, false});
            continue;
        }
        std::string name = payload.substr(0, sep);
        const bool ok = is_identifier(name);
        pairs.push_back({std::move(name), std::move(value), ok});
    }
    return pairs;
}

}  // namespace trace_forge
