#include "trace_forge/core_model.hpp"

#include <stdexcept>

namespace trace_forge {

std::string_view to_string(AnchorKind kind) {
    switch (kind) {
    case AnchorKind::assignment: return "assignment";
    case AnchorKind::post_loop: return "post_loop";
    case AnchorKind::return_val: return "return_val";
    }
    return "assignment";
}

AnchorKind anchor_kind_from_string(std::string_view text) {
    if (text == "assignment") return AnchorKind::assignment;
    if (text == "post_loop") return AnchorKind::post_loop;
    if (text == "return_val") return AnchorKind::return_val;
    throw std::invalid_argument("unknown anchor kind: " + std::string(text));
}

std::string_view to_string(TaskKind kind) {
    return kind == TaskKind::output_prediction ? "output_prediction" : "input_prediction";
}

TaskKind task_kind_from_string(std::string_view text) {
    if (text == "output" || text == "output_prediction") return TaskKind::output_prediction;
    if (text == "input" || text == "input_prediction") return TaskKind::input_prediction;
    throw std::invalid_argument("unknown task kind: " + std::string(text));
}

std::string_view to_string(BlockTag tag) {
    switch (tag) {
    case BlockTag::reasoning: return "reasoning";
    case BlockTag::print: return "print";
    case BlockTag::input: return "input";
    case BlockTag::answer: return "answer";
    }
    return "reasoning";
}

std::optional<BlockTag> block_tag_from_string(std::string_view text) {
    if (text == "reasoning") return BlockTag::reasoning;
    if (text == "print") return BlockTag::print;
    if (text == "input") return BlockTag::input;
    if (text == "answer") return BlockTag::answer;
    return std::nullopt;
}

std::optional<int> LineMap::lookup(int orig_line) const {
    if (orig_line < 1 || static_cast<std::size_t>(orig_line) > pairs.size()) return std::nullopt;
    const auto& [orig, instr] = pairs[static_cast<std::size_t>(orig_line) - 1];
    if (orig != orig_line) {
        // Non-dense map; fall back to a scan.
        for (const auto& p : pairs) {
            if (p.first == orig_line) return p.second;
        }
        return std::nullopt;
    }
    return instr;
}

bool LineMap::is_valid() const {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& [orig, instr] = pairs[i];
        if (orig != static_cast<int>(i) + 1) return false;
        if (instr < orig) return false;
        if (i > 0 && instr <= pairs[i - 1].second) return false;
    }
    return true;
}

LineMap LineMap::then(const LineMap& next) const {
    LineMap out;
    out.pairs.reserve(pairs.size());
    for (const auto& [orig, mid] : pairs) {
        auto instr = next.lookup(mid);
        if (!instr) throw std::out_of_range("line map composition: line " + std::to_string(mid) + " unmapped");
        out.pairs.emplace_back(orig, *instr);
    }
    return out;
}

LineMap LineMap::identity(int line_count) {
    LineMap m;
    for (int i = 1; i <= line_count; ++i) m.pairs.emplace_back(i, i);
    return m;
}

std::vector<std::string> Trajectory::predicted_states() const {
    std::vector<std::string> out;
    for (const auto& b : blocks) {
        if (b.tag == BlockTag::print) out.push_back(b.text);
    }
    return out;
}

std::optional<std::string> Trajectory::committed_input() const {
    for (const auto& b : blocks) {
        if (b.tag == BlockTag::input) return b.text;
    }
    return std::nullopt;
}

std::optional<std::string> Trajectory::answer() const {
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
        if (it->tag == BlockTag::answer) return it->text;
    }
    return std::nullopt;
}

bool is_identifier(std::string_view name) {
    if (name.empty()) return false;
    auto head = [](char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; };
    if (!head(name[0])) return false;
    for (char c : name.substr(1)) {
        if (!head(c) && !(c >= '0' && c <= '9')) return false;
    }
    return true;
}

std::string_view trim(std::string_view text) {
    constexpr std::string_view ws = " \t\r\n\f\v";
    auto b = text.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = text.find_last_not_of(ws);
    return text.substr(b, e - b + 1);
}

}  // namespace trace_forge
