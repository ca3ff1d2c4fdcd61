#include "trace_forge/literal.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <variant>
#include <vector>

namespace trace_forge {
namespace {

struct Value;
using Items = std::vector<Value>;
using Entries = std::vector<std::pair<Value, Value>>;

struct Str {
    std::u32string text;
};
struct Bytes {
    std::string data;
};
struct Int {
    std::string digits;  // canonical decimal, with a leading '-' when negative
};
struct Float {
    double value;
};
struct Bool {
    bool value;
};
struct None {};
struct List {
    Items items;
};
struct Tuple {
    Items items;
};
struct Dict {
    Entries entries;
};

struct Value {
    std::variant<Str, Bytes, Int, Float, Bool, None, List, Tuple, Dict> v;
};

std::string repr(const Value& value);

void append_utf8(std::string& out, char32_t c) {
    if (c < 0x80) {
        out.push_back(static_cast<char>(c));
    } else if (c < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (c >> 6)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else if (c < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (c >> 12)));
        out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (c >> 18)));
        out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
}

std::string hex_escape(char prefix, std::uint32_t c, int width) {
    static const char* digits = "0123456789abcdef";
    std::string s = "\\";
    s.push_back(prefix);
    for (int shift = (width - 1) * 4; shift >= 0; shift -= 4) s.push_back(digits[(c >> shift) & 0xF]);
    return s;
}

// Approximates str.isprintable for non-ASCII code points: separators,
// format characters, surrogates, private use and C1 controls are not.
bool is_printable_non_ascii(char32_t c) {
    if (c <= 0xA0 || c == 0xAD) return false;
    if (c == 0x1680 || (c >= 0x2000 && c <= 0x200F) || (c >= 0x2028 && c <= 0x202F)) return false;
    if ((c >= 0x205F && c <= 0x2064) || c == 0x3000 || c == 0xFEFF) return false;
    if ((c >= 0xD800 && c <= 0xF8FF) || (c >= 0xFFF9 && c <= 0xFFFB)) return false;
    if (c >= 0xF0000 || c > 0x10FFFF) return false;
    return true;
}

template <typename Chars>
char choose_quote(const Chars& text) {
    bool single = false;
    bool dbl = false;
    for (auto c : text) {
        if (c == '\'') single = true;
        if (c == '"') dbl = true;
    }
    return single && !dbl ? '"' : '\'';
}

std::string repr_str(const std::u32string& text) {
    const char quote = choose_quote(text);
    std::string out(1, quote);
    for (char32_t c : text) {
        if (c == static_cast<char32_t>(quote) || c == '\\') {
            out.push_back('\\');
            out.push_back(static_cast<char>(c));
        } else if (c == '\t') {
            out += "\\t";
        } else if (c == '\n') {
            out += "\\n";
        } else if (c == '\r') {
            out += "\\r";
        } else if (c < 0x20 || c == 0x7F) {
            out += hex_escape('x', c, 2);
        } else if (c < 0x7F || is_printable_non_ascii(c)) {
            append_utf8(out, c);
        } else if (c <= 0xFF) {
            out += hex_escape('x', c, 2);
        } else if (c <= 0xFFFF) {
            out += hex_escape('u', c, 4);
        } else {
            out += hex_escape('U', c, 8);
        }
    }
    out.push_back(quote);
    return out;
}

std::string repr_bytes(const std::string& data) {
    const char quote = choose_quote(data);
    std::string out = "b";
    out.push_back(quote);
    for (unsigned char c : data) {
        if (c == static_cast<unsigned char>(quote) || c == '\\') {
            out.push_back('\\');
            out.push_back(static_cast<char>(c));
        } else if (c == '\t') {
            out += "\\t";
        } else if (c == '\n') {
            out += "\\n";
        } else if (c == '\r') {
            out += "\\r";
        } else if (c < 0x20 || c >= 0x7F) {
            out += hex_escape('x', c, 2);
        } else {
            out.push_back(static_cast<char>(c));
        }
    }
    out.push_back(quote);
    return out;
}

std::string join(const Items& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += repr(items[i]);
    }
    return out;
}

struct ReprVisitor {
    std::string operator()(const Str& s) const { return repr_str(s.text); }
    std::string operator()(const Bytes& b) const { return repr_bytes(b.data); }
    std::string operator()(const Int& i) const { return i.digits; }
    std::string operator()(const Float& f) const { return float_repr(f.value); }
    std::string operator()(const Bool& b) const { return b.value ? "True" : "False"; }
    std::string operator()(const None&) const { return "None"; }
    std::string operator()(const List& l) const { return "[" + join(l.items) + "]"; }
    std::string operator()(const Tuple& t) const {
        if (t.items.size() == 1) return "(" + repr(t.items[0]) + ",)";
        return "(" + join(t.items) + ")";
    }
    std::string operator()(const Dict& d) const {
        std::string out = "{";
        for (std::size_t i = 0; i < d.entries.size(); ++i) {
            if (i) out += ", ";
            out += repr(d.entries[i].first) + ": " + repr(d.entries[i].second);
        }
        return out + "}";
    }
};

std::string repr(const Value& value) { return std::visit(ReprVisitor{}, value.v); }

// Arbitrary-precision conversion of a base-2/8/16 literal to decimal.
std::string to_decimal(std::string_view digits, unsigned base) {
    std::vector<std::uint32_t> limbs{0};  // little-endian, base 1e9
    for (char ch : digits) {
        unsigned d = ch >= '0' && ch <= '9' ? ch - '0' : (ch | 0x20) - 'a' + 10;
        std::uint64_t carry = d;
        for (auto& limb : limbs) {
            std::uint64_t cur = static_cast<std::uint64_t>(limb) * base + carry;
            limb = static_cast<std::uint32_t>(cur % 1000000000u);
            carry = cur / 1000000000u;
        }
        if (carry) limbs.push_back(static_cast<std::uint32_t>(carry));
    }
    std::string out = std::to_string(limbs.back());
    for (std::size_t i = limbs.size() - 1; i-- > 0;) {
        std::string part = std::to_string(limbs[i]);
        out += std::string(9 - part.size(), '0') + part;
    }
    return out;
}

bool is_hashable(const Value& v) {
    if (std::holds_alternative<List>(v.v) || std::holds_alternative<Dict>(v.v)) return false;
    if (const auto* t = std::get_if<Tuple>(&v.v)) {
        for (const auto& item : t->items) {
            if (!is_hashable(item)) return false;
        }
    }
    return true;
}

std::optional<double> numeric_key(const Value& v) {
    if (const auto* b = std::get_if<Bool>(&v.v)) return b->value ? 1.0 : 0.0;
    if (const auto* f = std::get_if<Float>(&v.v)) return f->value;
    if (const auto* i = std::get_if<Int>(&v.v)) {
        if (i->digits.size() > 15) return std::nullopt;
        return std::strtod(i->digits.c_str(), nullptr);
    }
    return std::nullopt;
}

bool same_key(const Value& a, const Value& b) {
    auto na = numeric_key(a);
    auto nb = numeric_key(b);
    if (na && nb) return *na == *nb;
    return repr(a) == repr(b);
}

class Parser {
public:
    explicit Parser(std::string_view text) : s_(text) {}

    std::optional<Value> parse_all() {
        // Leading spaces and tabs are tolerated, as by the reference
        // evaluator.
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
        auto v = parse_value();
        if (!v) return std::nullopt;
        skip_ws();
        if (pos_ != s_.size()) return std::nullopt;
        return v;
    }

    std::optional<Value> parse_strings() {
        skip_ws();
        auto v = parse_string_run();
        if (!v) return std::nullopt;
        skip_ws();
        if (pos_ != s_.size()) return std::nullopt;
        return v;
    }

private:
    void skip_ws() {
        while (pos_ < s_.size()) {
            char c = s_[pos_];
            if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f') {
                ++pos_;
            } else if (c == '\\' && pos_ + 1 < s_.size() && s_[pos_ + 1] == '\n') {
                pos_ += 2;
            } else if (c == '#') {
                while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    bool peek_is(char c) {
        skip_ws();
        return pos_ < s_.size() && s_[pos_] == c;
    }

    static bool is_name_char(char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
               static_cast<unsigned char>(c) >= 0x80;
    }

    std::string_view peek_word() {
        std::size_t end = pos_;
        while (end < s_.size() && is_name_char(s_[end])) ++end;
        return s_.substr(pos_, end - pos_);
    }

    bool at_string_start() {
        std::size_t p = pos_;
        while (p < s_.size() && p - pos_ < 2 && std::string_view("rRbBuUfF").find(s_[p]) != std::string_view::npos) ++p;
        return p < s_.size() && (s_[p] == '\'' || s_[p] == '"');
    }

    std::optional<Value> parse_value() {
        skip_ws();
        if (pos_ >= s_.size()) return std::nullopt;
        const char c = s_[pos_];
        if (c == '[') return parse_sequence(']');
        if (c == '(') return parse_sequence(')');
        if (c == '{') return parse_dict();
        if (at_string_start()) return parse_string_run();
        if (c == '-' || c == '+') {
            ++pos_;
            skip_ws();
            auto v = parse_number();
            if (!v) return std::nullopt;
            if (c == '-') negate(*v);
            return v;
        }
        if ((c >= '0' && c <= '9') || c == '.') return parse_number();
        const std::string_view word = peek_word();
        if (word == "True" || word == "False" || word == "None") {
            pos_ += word.size();
            if (word == "None") return Value{None{}};
            return Value{Bool{word == "True"}};
        }
        return std::nullopt;
    }

    static void negate(Value& v) {
        if (auto* i = std::get_if<Int>(&v.v)) {
            if (i->digits != "0") i->digits.insert(i->digits.begin(), '-');
        } else if (auto* f = std::get_if<Float>(&v.v)) {
            f->value = -f->value;
        }
    }

    std::optional<Value> parse_sequence(char close) {
        ++pos_;
        Items items;
        bool trailing_comma = false;
        while (true) {
            if (peek_is(close)) {
                ++pos_;
                break;
            }
            auto v = parse_value();
            if (!v) return std::nullopt;
            items.push_back(std::move(*v));
            trailing_comma = false;
            if (peek_is(',')) {
                ++pos_;
                trailing_comma = true;
                continue;
            }
            if (!peek_is(close)) return std::nullopt;
        }
        if (close == ']') return Value{List{std::move(items)}};
        if (items.size() == 1 && !trailing_comma) return std::move(items[0]);
        return Value{Tuple{std::move(items)}};
    }

    std::optional<Value> parse_dict() {
        ++pos_;
        Entries entries;
        while (true) {
            if (peek_is('}')) {
                ++pos_;
                break;
            }
            auto k = parse_value();
            if (!k || !peek_is(':')) return std::nullopt;  // sets are not canonicalized
            ++pos_;
            auto v = parse_value();
            if (!v || !is_hashable(*k)) return std::nullopt;
            bool replaced = false;
            for (auto& e : entries) {
                if (same_key(e.first, *k)) {
                    e.second = std::move(*v);
                    replaced = true;
                    break;
                }
            }
            if (!replaced) entries.emplace_back(std::move(*k), std::move(*v));
            if (peek_is(',')) {
                ++pos_;
                continue;
            }
            if (!peek_is('}')) return std::nullopt;
        }
        return Value{Dict{std::move(entries)}};
    }

    std::optional<Value> parse_number() {
        std::string digits;
        auto take_digits = [&](auto is_digit) {
            bool any = false;
            bool last_underscore = false;
            while (pos_ < s_.size()) {
                const char ch = s_[pos_];
                if (is_digit(ch)) {
                    digits.push_back(ch);
                    any = true;
                    last_underscore = false;
                } else if (ch == '_' && any && !last_underscore) {
                    last_underscore = true;
                } else {
                    break;
                }
                ++pos_;
            }
            return any && !last_underscore;
        };
        auto dec = [](char ch) { return ch >= '0' && ch <= '9'; };

        if (s_[pos_] == '0' && pos_ + 1 < s_.size() && std::string_view("xXoObB").find(s_[pos_ + 1]) != std::string_view::npos) {
            const char kind = static_cast<char>(s_[pos_ + 1] | 0x20);
            pos_ += 2;
            if (pos_ < s_.size() && s_[pos_] == '_') ++pos_;
            bool ok = false;
            unsigned base = 16;
            if (kind == 'x') {
                ok = take_digits([](char ch) { return std::isxdigit(static_cast<unsigned char>(ch)) != 0; });
            } else if (kind == 'o') {
                base = 8;
                ok = take_digits([](char ch) { return ch >= '0' && ch <= '7'; });
            } else {
                base = 2;
                ok = take_digits([](char ch) { return ch == '0' || ch == '1'; });
            }
            if (!ok || (pos_ < s_.size() && is_name_char(s_[pos_]))) return std::nullopt;
            return Value{Int{to_decimal(digits, base)}};
        }

        bool is_float = false;
        bool int_part = false;
        if (pos_ < s_.size() && dec(s_[pos_])) {
            if (!take_digits(dec)) return std::nullopt;
            int_part = true;
        }
        if (pos_ < s_.size() && s_[pos_] == '.') {
            is_float = true;
            digits.push_back('.');
            ++pos_;
            bool frac = false;
            if (pos_ < s_.size() && dec(s_[pos_])) {
                if (!take_digits(dec)) return std::nullopt;
                frac = true;
            }
            if (!int_part && !frac) return std::nullopt;
        } else if (!int_part) {
            return std::nullopt;
        }
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            is_float = true;
            digits.push_back('e');
            ++pos_;
            if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) digits.push_back(s_[pos_++]);
            if (pos_ >= s_.size() || !dec(s_[pos_]) || !take_digits(dec)) return std::nullopt;
        }
        if (pos_ < s_.size() && is_name_char(s_[pos_])) return std::nullopt;  // 1j, 1abc
        if (is_float) return Value{Float{std::strtod(digits.c_str(), nullptr)}};
        const auto nz = digits.find_first_not_of('0');
        if (nz == std::string::npos) return Value{Int{"0"}};
        if (nz > 0) return std::nullopt;  // leading zeros in a decimal literal
        return Value{Int{digits}};
    }

    // Adjacent string literals concatenate; str and bytes cannot mix.
    std::optional<Value> parse_string_run() {
        std::optional<Value> acc;
        while (true) {
            skip_ws();
            if (pos_ >= s_.size() || !at_string_start()) break;
            auto piece = parse_one_string();
            if (!piece) return std::nullopt;
            if (!acc) {
                acc = std::move(piece);
            } else if (auto* a = std::get_if<Str>(&acc->v)) {
                const auto* b = std::get_if<Str>(&piece->v);
                if (!b) return std::nullopt;
                a->text += b->text;
            } else {
                auto* a2 = std::get_if<Bytes>(&acc->v);
                const auto* b = std::get_if<Bytes>(&piece->v);
                if (!b) return std::nullopt;
                a2->data += b->data;
            }
        }
        return acc;
    }

    std::optional<char32_t> next_code_point() {
        const auto b0 = static_cast<unsigned char>(s_[pos_]);
        int extra = 0;
        char32_t c = 0;
        if (b0 < 0x80) {
            ++pos_;
            return b0;
        } else if ((b0 & 0xE0) == 0xC0) {
            extra = 1;
            c = b0 & 0x1F;
        } else if ((b0 & 0xF0) == 0xE0) {
            extra = 2;
            c = b0 & 0x0F;
        } else if ((b0 & 0xF8) == 0xF0) {
            extra = 3;
            c = b0 & 0x07;
        } else {
            return std::nullopt;
        }
        if (pos_ + extra >= s_.size()) return std::nullopt;
        for (int i = 1; i <= extra; ++i) {
            const auto b = static_cast<unsigned char>(s_[pos_ + i]);
            if ((b & 0xC0) != 0x80) return std::nullopt;
            c = (c << 6) | (b & 0x3F);
        }
        pos_ += extra + 1;
        return c;
    }

    std::optional<std::uint32_t> read_hex(int count) {
        if (pos_ + count > s_.size()) return std::nullopt;
        std::uint32_t v = 0;
        for (int i = 0; i < count; ++i) {
            const char ch = s_[pos_ + i];
            if (!std::isxdigit(static_cast<unsigned char>(ch))) return std::nullopt;
            v = v * 16 + (ch <= '9' ? ch - '0' : (ch | 0x20) - 'a' + 10);
        }
        pos_ += count;
        return v;
    }

    std::optional<Value> parse_one_string() {
        bool raw = false;
        bool bytes = false;
        while (s_[pos_] != '\'' && s_[pos_] != '"') {
            const char p = static_cast<char>(s_[pos_] | 0x20);
            if (p == 'r') raw = true;
            else if (p == 'b') bytes = true;
            else if (p == 'f') return std::nullopt;  // formatted strings are not literals
            ++pos_;
        }
        const char quote = s_[pos_];
        const bool triple = s_.substr(pos_, 3) == std::string(3, quote);
        pos_ += triple ? 3 : 1;

        std::u32string text;
        auto closes = [&]() {
            if (triple) return s_.substr(pos_, 3) == std::string(3, quote);
            return s_[pos_] == quote;
        };
        while (true) {
            if (pos_ >= s_.size()) return std::nullopt;
            if (closes()) {
                pos_ += triple ? 3 : 1;
                break;
            }
            const char ch = s_[pos_];
            if (ch == '\n' && !triple) return std::nullopt;
            if (ch != '\\') {
                auto cp = next_code_point();
                if (!cp) return std::nullopt;
                if (bytes && *cp >= 0x80) return std::nullopt;
                text.push_back(*cp);
                continue;
            }
            if (pos_ + 1 >= s_.size()) return std::nullopt;
            if (raw) {
                // The backslash stays; it only keeps the next character from
                // closing the literal.
                text.push_back('\\');
                ++pos_;
                auto cp = next_code_point();
                if (!cp) return std::nullopt;
                text.push_back(*cp);
                continue;
            }
            const char e = s_[pos_ + 1];
            pos_ += 2;
            switch (e) {
            case '\n': break;
            case '\\': text.push_back('\\'); break;
            case '\'': text.push_back('\''); break;
            case '"': text.push_back('"'); break;
            case 'a': text.push_back(7); break;
            case 'b': text.push_back(8); break;
            case 'f': text.push_back(12); break;
            case 'n': text.push_back('\n'); break;
            case 'r': text.push_back('\r'); break;
            case 't': text.push_back('\t'); break;
            case 'v': text.push_back(11); break;
            case 'x': {
                auto v = read_hex(2);
                if (!v) return std::nullopt;
                text.push_back(*v);
                break;
            }
            case 'u':
            case 'U':
            case 'N': {
                if (bytes) {
                    text.push_back('\\');
                    text.push_back(static_cast<char32_t>(e));
                    break;
                }
                if (e == 'N') return std::nullopt;
                auto v = read_hex(e == 'u' ? 4 : 8);
                if (!v || *v > 0x10FFFF) return std::nullopt;
                text.push_back(*v);
                break;
            }
            default:
                if (e >= '0' && e <= '7') {
                    std::uint32_t v = e - '0';
                    for (int i = 0; i < 2 && pos_ < s_.size() && s_[pos_] >= '0' && s_[pos_] <= '7'; ++i) {
                        v = v * 8 + (s_[pos_++] - '0');
                    }
                    if (bytes) v &= 0xFF;
                    text.push_back(v);
                } else {
                    text.push_back('\\');
                    --pos_;
                    auto cp = next_code_point();
                    if (!cp) return std::nullopt;
                    text.push_back(*cp);
                }
            }
        }
        if (bytes) {
            std::string data;
            for (char32_t c : text) data.push_back(static_cast<char>(c));
            return Value{Bytes{std::move(data)}};
        }
        return Value{Str{std::move(text)}};
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string float_repr(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value < 0 ? "-inf" : "inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::scientific);
    std::string_view sci(buf, static_cast<std::size_t>(res.ptr - buf));

    std::string out;
    if (sci.front() == '-') {
        out.push_back('-');
        sci.remove_prefix(1);
    }
    const auto epos = sci.find('e');
    std::string digits;
    for (char c : sci.substr(0, epos)) {
        if (c != '.') digits.push_back(c);
    }
    int exp = 0;
    std::from_chars(sci.data() + epos + 1 + (sci[epos + 1] == '+'), sci.data() + sci.size(), exp);

    if (exp >= -4 && exp < 16) {
        if (exp >= 0) {
            const auto int_len = static_cast<std::size_t>(exp) + 1;
            if (digits.size() <= int_len) {
                out += digits + std::string(int_len - digits.size(), '0') + ".0";
            } else {
                out += digits.substr(0, int_len) + "." + digits.substr(int_len);
            }
        } else {
            out += "0." + std::string(static_cast<std::size_t>(-exp - 1), '0') + digits;
        }
        return out;
    }
    out.push_back(digits[0]);
    if (digits.size() > 1) out += "." + digits.substr(1);
    out += exp < 0 ? "e-" : "e+";
    const std::string mag = std::to_string(exp < 0 ? -exp : exp);
    if (mag.size() < 2) out.push_back('0');
    return out + mag;
}

std::optional<std::string> canonicalize_literal(std::string_view text) {
    auto v = Parser(text).parse_all();
    if (!v) return std::nullopt;
    return repr(*v);
}

std::optional<std::string> decode_str_literal(std::string_view text) {
    auto v = Parser(text).parse_strings();
    if (!v) return std::nullopt;
    const auto* s = std::get_if<Str>(&v->v);
    if (!s) return std::nullopt;
    std::string out;
    for (char32_t c : s->text) append_utf8(out, c);
    return out;
}

}  // namespace trace_forge
