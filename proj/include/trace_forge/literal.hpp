#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace trace_forge {

/// Canonical text of a subject-language literal: what `repr(ast.literal_eval(text))`
/// prints, for str, bytes, int, float, bool, None and (nested) list, tuple
/// and dict values. Returns nullopt for malformed text and for values whose
/// printed form is not a pure function of the text (sets, complex numbers).
std::optional<std::string> canonicalize_literal(std::string_view text);

/// Decoded content when `text` is a single str literal (possibly implicitly
/// concatenated), e.g. `'a\tb'` -> "a<TAB>b" in UTF-8.
std::optional<std::string> decode_str_literal(std::string_view text);

/// Shortest round-trip repr of a double in the subject language's style
/// (`1.0`, `1e+16`, `0.0001`, `inf`, `nan`).
std::string float_repr(double value);

}  // namespace trace_forge
