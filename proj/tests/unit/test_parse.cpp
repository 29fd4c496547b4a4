// SPDX-License-Identifier: Apache-2.0

#include "structchem/errors.hpp"
#include "structchem/parse.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace structchem;

namespace {

std::string const sample = R"(Here is my solution.
FORMULAE:
[Formula 1] E = h * nu
  - E: energy of the photon
  - h: the Planck constant
[Formula 2] c = lambda * nu
CONFIDENCE_FORMULAE: 0.8
REASONING:
[Step 1] Convert the wavelength to metres.
[Step 2] Compute the frequency
and carry three digits.
CONFIDENCE_REASONING: 0.7
)";

} // namespace

TEST_SUITE("parse")
{
    TEST_CASE("generation blocks")
    {
        auto const g = parse_generation(sample);
        REQUIRE(g.formulae.formulae.size() == 2);
        CHECK(g.formulae.formulae[0].expression == "E = h * nu");
        REQUIRE(g.formulae.formulae[0].variables.size() == 2);
        CHECK(g.formulae.formulae[0].variables[1] == VariableExplanation{"h", "the Planck constant"});
        CHECK(g.formulae.formulae[1].variables.empty());
        CHECK(g.formulae.confidence == doctest::Approx(0.8));
        REQUIRE(g.reasoning.steps.size() == 2);
        CHECK(g.reasoning.steps[1] == "Compute the frequency\nand carry three digits.");
        CHECK(g.reasoning.confidence == doctest::Approx(0.7));
        CHECK(g.warnings.empty());
    }

    TEST_CASE("markdown decoration, percent scores, and casing")
    {
        auto const g = parse_generation("**Formulae:**\n1. PV = nRT\n## confidence_formulae: 85%\n**REASONING:**\nStep 1: plug in.\n"
                                        "CONFIDENCE_REASONING: 0.5");
        REQUIRE(g.formulae.formulae.size() == 1);
        CHECK(g.formulae.confidence == doctest::Approx(0.85));
        CHECK(g.reasoning.steps == std::vector<std::string>{"plug in."});
    }

    TEST_CASE("out-of-range confidence is clamped with a warning")
    {
        auto const g = parse_generation("FORMULAE:\n[Formula 1] a = b\nCONFIDENCE_FORMULAE: 1.3\nREASONING:\n[Step 1] x\n"
                                        "CONFIDENCE_REASONING: -0.2");
        CHECK(g.formulae.confidence == 1.0);
        CHECK(g.reasoning.confidence == 0.0);
        REQUIRE(g.warnings.size() == 2);
        CHECK(g.warnings[0].find("clamped") != std::string::npos);
    }

    TEST_CASE("missing confidence defaults to 0 with a warning")
    {
        auto const g = parse_generation("FORMULAE:\n[Formula 1] a = b\nREASONING:\n[Step 1] x\nCONFIDENCE_REASONING: 0.4");
        CHECK(g.formulae.confidence == 0.0);
        REQUIRE(g.warnings.size() == 1);
        CHECK(g.warnings[0].find("missing") != std::string::npos);
    }

    TEST_CASE("missing or empty blocks are parse errors")
    {
        CHECK_THROWS_WITH_AS(parse_generation("FORMULAE:\n[Formula 1] a = b\nCONFIDENCE_FORMULAE: 1"),
                             doctest::Contains("REASONING"), ParseError);
        CHECK_THROWS_AS(parse_generation("REASONING:\n[Step 1] x"), ParseError);
        CHECK_THROWS_AS(parse_generation("FORMULAE:\nREASONING:\n[Step 1] x"), ParseError);
        try
        {
            (void)parse_generation("nothing useful here");
            FAIL("expected ParseError");
        }
        catch (ParseError const& e)
        {
            CHECK(e.span().find("nothing useful") != std::string::npos);
        }
    }

    TEST_CASE("round trip on generated contents")
    {
        std::mt19937_64 rng(2024);
        std::vector<std::string> const words{"pressure", "n", "=", "R", "T", "/", "V", "(", ")", "1.5e-3", "mol", "K",
                                             "kPa", "nu", "lambda", "h*c", "sqrt", "2", "ln", "0.082"};
        auto pick = [&](std::size_t lo, std::size_t hi) {
            std::string s;
            auto const n = std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
            for (std::size_t i = 0; i < n; ++i)
                s += (i ? " " : "") + words[std::uniform_int_distribution<std::size_t>(0, words.size() - 1)(rng)];
            return s;
        };
        auto score = [&] { return std::uniform_int_distribution<int>(0, 1000)(rng) / 1000.0; };

        for (int trial = 0; trial < 300; ++trial)
        {
            FormulaSet f;
            auto const nf = std::uniform_int_distribution<int>(1, 5)(rng);
            for (int i = 0; i < nf; ++i)
            {
                Formula formula{"x" + std::to_string(i) + " = " + pick(1, 6), {}};
                auto const nv = std::uniform_int_distribution<int>(0, 3)(rng);
                for (int v = 0; v < nv; ++v)
                    formula.variables.push_back({"v" + std::to_string(v), pick(1, 5)});
                f.formulae.push_back(std::move(formula));
            }
            f.confidence = score();
            ReasoningTrace r;
            auto const ns = std::uniform_int_distribution<int>(1, 8)(rng);
            for (int i = 0; i < ns; ++i)
                r.steps.push_back("Compute " + pick(1, 8));
            r.confidence = score();

            auto const g = parse_generation(format_generation(f, r));
            CAPTURE(trial);
            CHECK(g.formulae == f);
            CHECK(g.reasoning == r);
            CHECK(g.warnings.empty());

            auto const review = parse_review(format_review(Verdict::incorrect, r, 0.9), ReasoningTrace{{"old"}, 0.2});
            CHECK(std::get<ReasoningTrace>(review.revised).steps == r.steps);
        }
    }

    TEST_CASE("review: incorrect with revision")
    {
        auto const reviewed = support::formulae("F0", 0.6);
        auto const revised = support::formulae("F1", 0.0);
        auto const out = parse_review(format_review(Verdict::incorrect, revised, 0.9), reviewed);
        CHECK(out.verdict == Verdict::incorrect);
        CHECK(out.confidence == doctest::Approx(0.9));
        CHECK(std::get<FormulaSet>(out.revised).formulae == revised.formulae);
    }

    TEST_CASE("review: correct verdict keeps the reviewed content")
    {
        auto const reviewed = support::reasoning("R0", 0.6);
        auto const out = parse_review("VERDICT: correct\nREVISED_REASONING:\n[Step 1] something else\nCONFIDENCE: 0.95", reviewed);
        CHECK(out.verdict == Verdict::correct);
        CHECK(std::get<ReasoningTrace>(out.revised).steps == reviewed.steps);
        CHECK(out.warnings.size() == 1);
    }

    TEST_CASE("review: incorrect without revision keeps content and warns")
    {
        auto const reviewed = support::reasoning("R0", 0.6);
        auto const out = parse_review("VERDICT: incorrect\nCONFIDENCE: 0.3", reviewed);
        CHECK(std::get<ReasoningTrace>(out.revised).steps == reviewed.steps);
        CHECK(out.warnings.size() == 1);
    }

    TEST_CASE("review: malformed replies")
    {
        auto const reviewed = support::reasoning("R0", 0.6);
        CHECK_THROWS_AS(parse_review("CONFIDENCE: 0.3", reviewed), ParseError);
        CHECK_THROWS_AS(parse_review("VERDICT: maybe\nCONFIDENCE: 0.3", reviewed), ParseError);
        CHECK_THROWS_AS(parse_review("VERDICT: correct", reviewed), ParseError);
    }

    TEST_CASE("final answer forms")
    {
        struct Case
        {
            char const* text;
            double value;
        };
        for (auto const& c : {Case{"The answer is therefore 2.450.", 2.45},
                              Case{"so the answer is therefore -3.1 kJ/mol.", -3.1},
                              Case{"The answer is therefore 1.312e-20.", 1.312e-20},
                              Case{"The answer is therefore 1.312×10^-20 J.", 1.312e-20},
                              Case{"The answer is therefore 1.312 x 10^(-20).", 1.312e-20},
                              Case{"The answer is therefore $1.312\\times10^{-20}$.", 1.312e-20},
                              Case{"The answer is therefore 1.312×10⁻²⁰ J.", 1.312e-20},
                              Case{"THE ANSWER IS THEREFORE 7", 7.0},
                              Case{"The answer is therefore 1. Wait. The answer is therefore 4.000.", 4.0}})
        {
            CAPTURE(c.text);
            auto const a = extract_final_answer(c.text);
            CHECK(a.value == doctest::Approx(c.value).epsilon(1e-12));
        }
        auto const unit = extract_final_answer("The answer is therefore 2.450 kJ.");
        REQUIRE(unit.unit_text.has_value());
        CHECK(*unit.unit_text == "kJ");
    }

    TEST_CASE("final answer failures")
    {
        CHECK_THROWS_AS(extract_final_answer("I think it is 2.45."), ParseError);
        CHECK_THROWS_AS(extract_final_answer("The answer is therefore unknown."), ParseError);
    }

    TEST_CASE("code blocks")
    {
        CHECK(parse_code_block("text\n```python\nprint(1)\n```\nmore") == "print(1)");
        CHECK(parse_code_block("```\na = 1\n```\n```py\nb = 2\n```") == "b = 2");
        CHECK_THROWS_AS(parse_code_block("no code"), ParseError);
    }

    TEST_CASE("confidence formatting")
    {
        CHECK(format_confidence(1.0) == "1");
        CHECK(format_confidence(0.5) == "0.5");
        CHECK(format_confidence(0.123) == "0.123");
    }
}
