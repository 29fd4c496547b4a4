// SPDX-License-Identifier: Apache-2.0

#include "structchem/errors.hpp"
#include "structchem/grade.hpp"

#include "decimal_oracle.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace structchem;

namespace {

std::vector<GradeResult> table_fixture()
{
    // correct / total per dataset for one method.
    struct Cell
    {
        char const* dataset;
        int correct;
        int total;
    };
    std::vector<GradeResult> out;
    for (auto const& c : {Cell{"quan", 13, 34}, Cell{"chemmc", 21, 39}, Cell{"atkins", 60, 107}, Cell{"matter", 16, 49}})
        for (int i = 0; i < c.total; ++i)
        {
            auto g = make_grade(std::string(c.dataset) + "-" + std::to_string(i), i < c.correct ? 1.0 : 5.0, 1.0);
            g.dataset = c.dataset;
            g.method = "structchem";
            g.mode = "zero_shot";
            out.push_back(std::move(g));
        }
    return out;
}

} // namespace

TEST_SUITE("grade")
{
    TEST_CASE("worked examples")
    {
        CHECK(grade_answer(45.75, 45.7));
        CHECK(grade_answer(45.8, 45.7));
        CHECK_FALSE(grade_answer(45.81, 45.7));
        CHECK(grade_answer(1.25e-20, 1.312e-20));
        CHECK(grade_answer(1.26e-20, 1.312e-20));
        CHECK_FALSE(grade_answer(1.24e-20, 1.312e-20));
        CHECK(grade_answer(0.05, 0.0));
        CHECK_FALSE(grade_answer(0.051, 0.0));
        CHECK(grade_answer(-2.0, -2.1));
        CHECK_FALSE(grade_answer(2.0, -2.0));
    }

    TEST_CASE("matches the exact decimal reference")
    {
        oracle::PairGenerator gen(99);
        int disagreements = 0;
        for (int i = 0; i < 5000; ++i)
        {
            auto const [pred, gold] = gen.next();
            auto const expected = oracle::correct(pred, gold);
            auto const got = grade_answer(pred.to_double(), gold.to_double());
            if (expected != got)
            {
                ++disagreements;
                INFO(pred.str(), " vs ", gold.str());
                CHECK(got == expected);
            }
        }
        CHECK(disagreements == 0);
    }

    TEST_CASE("reflexive")
    {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> exponent(-30, 8);
        for (int i = 0; i < 2000; ++i)
        {
            auto const x = std::pow(10.0, exponent(rng)) * (i % 2 ? -1 : 1);
            CHECK(grade_answer(x, x));
        }
        CHECK(grade_answer(0.0, 0.0));
    }

    TEST_CASE("missing prediction is a failure")
    {
        auto const g = make_grade("p", std::nullopt, 1.0);
        CHECK_FALSE(g.correct);
        CHECK(g.failure_kind == FailureKind::no_answer);
        auto const p = make_grade("p", std::nullopt, 1.0, FailureKind::parse_failure);
        CHECK(p.failure_kind == FailureKind::parse_failure);
        auto const wrong = make_grade("p", 3.0, 1.0);
        CHECK(wrong.failure_kind == FailureKind::out_of_tolerance);
        auto const right = make_grade("p", 1.0, 1.0);
        CHECK_FALSE(right.failure_kind.has_value());
    }

    TEST_CASE("grade json round trip")
    {
        auto g = make_grade("p", 2.5, 2.45);
        g.dataset = "quan";
        g.method = "cot";
        g.mode = "few_shot";
        auto const back = grade_from_json(to_json(g));
        CHECK(back.problem_id == g.problem_id);
        CHECK(back.predicted == g.predicted);
        CHECK(back.correct == g.correct);
        CHECK(back.mode == "few_shot");
        auto const none = grade_from_json(to_json(make_grade("q", std::nullopt, 1.0)));
        CHECK_FALSE(none.predicted.has_value());
        CHECK(none.failure_kind == FailureKind::no_answer);
        CHECK_THROWS_AS(failure_kind_from_string("bogus"), Error);
    }

    TEST_CASE("aggregate reproduces the four-dataset average")
    {
        auto const results = table_fixture();
        auto const table = aggregate(results);
        auto const* row = table.find("structchem", "zero_shot");
        REQUIRE(row != nullptr);
        CHECK(table.datasets == std::vector<std::string>{"atkins", "chemmc", "matter", "quan"});
        // Reference: mean of the four per-dataset percentages.
        double const ref = (100.0 * 13 / 34 + 100.0 * 21 / 39 + 100.0 * 60 / 107 + 100.0 * 16 / 49) / 4;
        CHECK(row->average == doctest::Approx(ref));
        CHECK(round2(row->average) == doctest::Approx(45.20));
        CHECK(round2(row->cells[3].accuracy) == doctest::Approx(38.24));
        CHECK(row->empty_cells == 0);
    }

    TEST_CASE("aggregate is invariant under permutation")
    {
        auto results = table_fixture();
        auto const reference = to_json(aggregate(results)).dump();
        std::mt19937 rng(11);
        for (int i = 0; i < 20; ++i)
        {
            std::shuffle(results.begin(), results.end(), rng);
            CHECK(to_json(aggregate(results)).dump() == reference);
        }
    }

    TEST_CASE("empty cells are flagged and left out of the average")
    {
        std::vector<GradeResult> results;
        auto add = [&](char const* ds, char const* method, bool ok) {
            auto g = make_grade("x", ok ? 1.0 : 9.0, 1.0);
            g.dataset = ds;
            g.method = method;
            g.mode = "zero_shot";
            results.push_back(g);
        };
        add("quan", "cot", true);
        add("quan", "cot", false);
        add("chemmc", "cot", true);
        add("chemmc", "pot_code", false);

        auto const table = aggregate(results);
        auto const* pot = table.find("pot_code", "zero_shot");
        REQUIRE(pot != nullptr);
        CHECK(pot->empty_cells == 1);
        CHECK(pot->average == 0.0);
        auto const* cot = table.find("cot", "zero_shot");
        CHECK(cot->average == doctest::Approx(75.0));

        auto const text = format_table(table);
        CHECK(text.find("n/a") != std::string::npos);
        CHECK(text.find("*") != std::string::npos);
        CHECK(to_json(table).dump().find("\"empty_cells\"") != std::string::npos);
    }

    TEST_CASE("failed runs count as incorrect and are tallied")
    {
        std::vector<GradeResult> results{make_grade("a", std::nullopt, 1.0),
                                         make_grade("b", std::nullopt, 1.0, FailureKind::parse_failure),
                                         make_grade("c", 1.0, 1.0)};
        auto const table = aggregate(results, {false, false, false});
        REQUIRE(table.rows.size() == 1);
        auto const& cell = table.rows[0].cells.at(0);
        CHECK(cell.total == 3);
        CHECK(cell.correct == 1);
        CHECK(cell.no_answer == 1);
        CHECK(cell.parse_failure == 1);
    }

    TEST_CASE("round2 rounds half away from zero")
    {
        CHECK(round2(45.205) == doctest::Approx(45.21));
        CHECK(round2(45.2049) == doctest::Approx(45.20));
        CHECK(round2(-0.125) == doctest::Approx(-0.13));
        CHECK(round2(0.125) == doctest::Approx(0.13));
    }
}
