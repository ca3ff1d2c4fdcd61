#include "trace_forge/literal.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "json.hpp"
#include "test_support.hpp"

namespace trace_forge {
namespace {

// Expected values in the data files were produced by the reference
// interpreter's literal evaluator and repr; null marks inputs it rejects or
// values (sets, complex) that are deliberately not canonicalized.
void check_oracle_file(const std::string& name) {
    const auto cases = nlohmann::json::parse(testing::read_data(name));
    ASSERT_FALSE(cases.empty());
    for (const auto& c : cases) {
        const std::string input = c[0].get<std::string>();
        const auto got = canonicalize_literal(input);
        if (c[1].is_null()) {
            EXPECT_FALSE(got.has_value()) << "input: " << input << " got: " << got.value_or("");
        } else {
            ASSERT_TRUE(got.has_value()) << "input: " << input;
            EXPECT_EQ(*got, c[1].get<std::string>()) << "input: " << input;
        }
    }
}

TEST(Literal, HandPickedCasesMatchReferenceRepr) { check_oracle_file("literal_oracle.json"); }

TEST(Literal, RandomNestedLiteralsMatchReferenceRepr) { check_oracle_file("literal_fuzz.json"); }

TEST(Literal, CanonicalFormIsAFixedPoint) {
    const auto cases = nlohmann::json::parse(testing::read_data("literal_fuzz.json"));
    for (const auto& c : cases) {
        const std::string canon = c[1].get<std::string>();
        EXPECT_EQ(canonicalize_literal(canon), canon);
    }
}

TEST(Literal, FloatRepr) {
    EXPECT_EQ(float_repr(1.0), "1.0");
    EXPECT_EQ(float_repr(0.1), "0.1");
    EXPECT_EQ(float_repr(1e16), "1e+16");
    EXPECT_EQ(float_repr(123456789012345.6), "123456789012345.6");
    EXPECT_EQ(float_repr(1e-5), "1e-05");
    EXPECT_EQ(float_repr(-0.0), "-0.0");
    EXPECT_EQ(float_repr(INFINITY), "inf");
    EXPECT_EQ(float_repr(NAN), "nan");
}

TEST(Literal, DecodeStr) {
    EXPECT_EQ(decode_str_literal("'a\\tb'"), "a\tb");
    EXPECT_EQ(decode_str_literal("'6wrTqo|zCjWT'"), "6wrTqo|zCjWT");
    EXPECT_EQ(decode_str_literal("'a' \"b\""), "ab");
    EXPECT_FALSE(decode_str_literal("b'a'").has_value());
    EXPECT_FALSE(decode_str_literal("6wrTqo").has_value());
    EXPECT_FALSE(decode_str_literal("'a' + 'b'").has_value());
}

TEST(Literal, NamedEscapesAreLeftToTheShim) {
    EXPECT_FALSE(canonicalize_literal("'\\N{BULLET}'").has_value());
}

}  // namespace
}  // namespace trace_forge
