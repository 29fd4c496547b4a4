// SPDX-License-Identifier: Apache-2.0

#include "structchem/annotations.hpp"
#include "structchem/errors.hpp"

#include "test_support.hpp"

#include <doctest.h>

using namespace structchem;

namespace {

RunRecord record(std::string const& id, std::string const& dataset, bool correct)
{
    RunRecord r;
    r.problem = support::problem(id, 1.0, "", std::nullopt, dataset);
    r.method = RunMethod::structchem;
    r.grade = make_grade(id, correct ? 1.0 : 5.0, 1.0);
    r.grade.dataset = dataset;
    r.grade.method = "structchem";
    r.grade.mode = "zero_shot";
    return r;
}

} // namespace

TEST_SUITE("annotations")
{
    TEST_CASE("correct runs cannot be annotated")
    {
        AnnotationStore store;
        CHECK_THROWS_AS(store.annotate(record("a", "quan", true), ErrorCategory::factual, ""), AnnotationError);
        CHECK(store.annotations().empty());
    }

    TEST_CASE("distribution per dataset")
    {
        AnnotationStore store;
        store.annotate(record("a", "quan", false), ErrorCategory::principle, "");
        store.annotate(record("b", "quan", false), ErrorCategory::calculation, "");
        store.annotate(record("c", "quan", false), ErrorCategory::calculation, "");
        store.annotate(record("d", "quan", false), ErrorCategory::calculation, "");
        store.annotate(record("e", "atkins", false), ErrorCategory::reasoning, "");

        auto const d = store.distribution();
        CHECK(d.at("quan").at(ErrorCategory::calculation).count == 3);
        CHECK(d.at("quan").at(ErrorCategory::calculation).proportion == doctest::Approx(0.75));
        CHECK(d.at("quan").at(ErrorCategory::factual).count == 0);
        CHECK(d.at("atkins").at(ErrorCategory::reasoning).proportion == doctest::Approx(1.0));

        double sum = 0;
        for (auto const& [cat, share] : d.at("quan"))
            sum += share.proportion;
        CHECK(sum == doctest::Approx(1.0));
        CHECK(to_json(d).size() == 8);
    }

    TEST_CASE("re-annotating replaces the label")
    {
        AnnotationStore store;
        auto const r = record("a", "quan", false);
        store.annotate(r, ErrorCategory::principle, "first");
        store.annotate(r, ErrorCategory::factual, "second");
        REQUIRE(store.annotations().size() == 1);
        CHECK(store.annotations()[0].category == ErrorCategory::factual);
        CHECK(store.annotations()[0].note == "second");
    }

    TEST_CASE("annotations persist to their file")
    {
        support::TempDir dir;
        auto const path = dir / "annotations.json";
        {
            AnnotationStore store(path);
            store.annotate(record("a", "quan", false), ErrorCategory::reasoning, "skipped a step");
        }
        AnnotationStore again(path);
        REQUIRE(again.annotations().size() == 1);
        CHECK(again.annotations()[0].note == "skipped a step");
        CHECK(again.annotations()[0].dataset == "quan");
    }

    TEST_CASE("category names")
    {
        CHECK(error_category_from_string("calculation") == ErrorCategory::calculation);
        CHECK(std::string(to_string(ErrorCategory::principle)) == "principle");
        CHECK_THROWS_AS(error_category_from_string("typo"), AnnotationError);
    }
}
