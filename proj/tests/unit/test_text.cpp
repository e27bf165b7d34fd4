// SPDX-License-Identifier: Apache-2.0
#include <tmlpred/error.hpp>
#include <tmlpred/task.hpp>
#include <tmlpred/text.hpp>

#include <doctest.h>

#include <random>

using namespace tmlpred;

TEST_SUITE("text")
{
    TEST_CASE("fold and compare")
    {
        CHECK(text::fold("  SwAhili ") == "swahili");
        CHECK(text::iequals("GPT-4", "gpt-4"));
        CHECK_FALSE(text::iequals("GPT-4", "GPT-4o"));
        FoldLess less;
        CHECK_FALSE(less("abc", "ABC"));
        CHECK_FALSE(less("ABC", "abc"));
        CHECK(less("abc", "abd"));
    }

    TEST_CASE("split, join, tokenize")
    {
        auto const parts = text::split("a,b,,c", ',');
        REQUIRE(parts.size() == 4);
        CHECK(parts[2].empty());
        CHECK(text::join(parts, "|") == "a|b||c");
        CHECK(text::tokenize("Hello, World-42!") == std::vector<std::string> {"hello", "world", "42"});
    }

    TEST_CASE("format_number round-trips")
    {
        CHECK(text::format_number(85.0) == "85");
        CHECK(text::format_number(61.25) == "61.25");
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> d(-1e6, 1e6);
        for (int i = 0; i < 500; ++i)
        {
            double const v = d(rng);
            CHECK(text::parse_number(text::format_number(v)) == v);
        }
    }

    TEST_CASE("parse_number is strict")
    {
        CHECK(text::parse_number(" 12.5 ") == 12.5);
        CHECK_FALSE(text::parse_number("12.5%"));
        CHECK_FALSE(text::parse_number(""));
        CHECK_FALSE(text::parse_number("nan"));
        CHECK_FALSE(text::parse_number("inf"));
    }

    TEST_CASE("canonical dump sorts keys")
    {
        auto const a = Json::parse(R"({"b":1,"a":{"d":2,"c":3}})");
        auto const b = Json::parse(R"({"a":{"c":3,"d":2},"b":1})");
        CHECK(text::canonical_dump(a) == text::canonical_dump(b));
    }

    TEST_CASE("substitute")
    {
        CHECK(text::substitute("{x} and {y} and {z}", {{"x", "1"}, {"y", "2"}}) == "1 and 2 and {z}");
    }

    TEST_CASE("alias table")
    {
        auto const t = AliasTable::from_json(Json::parse(R"({"Llama-3": ["LLaMA 3", "llama3"]})"));
        CHECK(t.resolve("llama 3") == "Llama-3");
        CHECK(t.resolve("LLAMA3") == "Llama-3");
        CHECK(t.resolve("Qwen2") == "Qwen2");
    }

    TEST_CASE("task names")
    {
        CHECK(task_from_string("Code Generation") == Task::CodeGeneration);
        CHECK(task_from_string("machine_translation") == Task::MachineTranslation);
        CHECK_THROWS_AS(task_from_string("poetry"), InputError);
        CHECK(is_programming_language("Python"));
        CHECK_FALSE(is_programming_language("swh"));
        CHECK(query_type_from_string("qnaset") == QueryType::ComparativeReasoning);
        CHECK(query_type_from_string("predset") == QueryType::NumericPrediction);
    }
}
