// SPDX-License-Identifier: Apache-2.0

#include "structchem/cli.hpp"
#include "structchem/harness.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <sstream>

using namespace structchem;

namespace {

struct CliResult
{
    int code = 0;
    std::string out;
    std::string err;
};

CliResult cli(std::vector<std::string> const& args)
{
    std::ostringstream out;
    std::ostringstream err;
    CliResult r;
    r.code = cli_main(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string quan()
{
    return (support::fixture_dir() / "scibench" / "quan.json").string();
}

/// Oracle file answering every problem of quan with one structured run (n = 1);
/// every fourth problem gets a wrong answer.
std::filesystem::path write_oracle(support::TempDir const& dir)
{
    LoadOptions lo;
    lo.field_map = parse_field_map({"id=problemid"});
    auto const ds = load_dataset(quan(), lo);
    nlohmann::json per_problem;
    std::size_t i = 0;
    for (auto const& p : ds.problems_wo_solutions)
    {
        support::StructuredScript s{0.6, 0.6, {0.8}, {0.5}};
        s.answer = i++ % 4 == 0 ? "123456" : p.gold_answer_text;
        per_problem[p.id] = s.replies();
    }
    auto const path = dir / "oracle.json";
    write_text_file(path, nlohmann::json{{"per_problem", per_problem}}.dump());
    return path;
}

} // namespace

TEST_SUITE("cli")
{
    TEST_CASE("usage errors exit with 2")
    {
        CHECK(cli({}).code == 2);
        CHECK(cli({"oracle", "--out", "/tmp/x", "--oracle", "o.json"}).code == 2);
        CHECK(cli({"frobnicate"}).code == 2);
        CHECK(cli({"export", "--run", "r", "--format", "poetry"}).code == 2);
    }

    TEST_CASE("runtime errors exit with 1")
    {
        support::TempDir dir;
        auto const r = cli({"oracle", "--dataset", "/nonexistent.json", "--oracle", "o.json", "--out", (dir / "run").string()});
        CHECK(r.code == 1);
        CHECK(r.err.rfind("error: ", 0) == 0);
        auto const no_model = cli({"run", "--dataset", quan(), "--field-map", "id=problemid", "--out", (dir / "r2").string()});
        CHECK(no_model.code == 1);
        CHECK(no_model.err.find("no model configured") != std::string::npos);
    }

    TEST_CASE("oracle run, report, annotate, export")
    {
        support::TempDir dir;
        auto const oracle = write_oracle(dir);
        auto const run = (dir / "run").string();
        auto const r = cli({"oracle", "--dataset", quan(), "--field-map", "id=problemid", "--oracle", oracle.string(), "--n",
                            "1", "--concurrency", "3", "--out", run});
        INFO(r.err);
        REQUIRE(r.code == 0);
        CHECK(r.out.find("structchem") != std::string::npos);

        auto const manifest = read_manifest(run);
        CHECK(manifest["status"] == "complete");
        CHECK(manifest["summary"]["problems"] == 34);
        CHECK(manifest["summary"]["correct"] == 25);
        CHECK(manifest["n"] == 1);
        CHECK(manifest["template_version"] == TemplateLibrary::builtin().version());

        auto const records = load_records(run);
        REQUIRE(records.size() == 34);
        for (auto const& rec : records)
            CHECK(rec.backend_calls() == 4);

        auto const accuracy = nlohmann::json::parse(read_text_file(std::filesystem::path(run) / "reports" / "accuracy.json"));
        CHECK(accuracy.dump().find("73.5") != std::string::npos);

        // A second run into the same directory needs --overwrite.
        CHECK(cli({"oracle", "--dataset", quan(), "--field-map", "id=problemid", "--oracle", oracle.string(), "--out", run})
                  .code == 1);

        std::string wrong_id;
        for (auto const& rec : records)
            if (!rec.grade.correct)
            {
                wrong_id = rec.problem.id;
                break;
            }
        REQUIRE_FALSE(wrong_id.empty());
        CHECK(cli({"annotate", "--run", run, "--problem", wrong_id, "--category", "calculation", "--note", "off by 1e5"}).code ==
              0);
        CHECK(cli({"annotate", "--run", run, "--problem", records[1].problem.id, "--category", "factual"}).code == 1);

        auto const report = cli({"report", "--run", run});
        CHECK(report.code == 0);
        auto const reports = std::filesystem::path(run) / "reports";
        auto const dist = nlohmann::json::parse(read_text_file(reports / "error_distribution.json"));
        bool found = false;
        for (auto const& e : dist)
            if (e["category"] == "calculation" && e["count"] == 1)
                found = true;
        CHECK(found);
        auto const steps = nlohmann::json::parse(read_text_file(reports / "step_stats.json"));
        REQUIRE(steps.size() == 1);
        CHECK(steps[0]["step_histogram"].dump() == R"({"3":34})");

        auto const exported = cli({"export", "--run", run, "--format", "structured_trace", "--only-correct"});
        CHECK(exported.code == 0);
        auto const corpus = read_text_file(std::filesystem::path(run) / "corpora" / "structured_trace.jsonl");
        CHECK(std::count(corpus.begin(), corpus.end(), '\n') == 26);

        auto const regraded = cli({"grade", "--run", run});
        CHECK(regraded.code == 0);
        CHECK(regraded.out == r.out);
    }

    TEST_CASE("pot_code without a sandbox warns and records the failure")
    {
        support::TempDir dir;
        write_text_file(dir / "o.json", R"(["```python\nprint(1)\n```"])");
        auto const run = (dir / "run").string();
        auto const r = cli({"oracle", "--dataset", quan(), "--field-map", "id=problemid", "--oracle", (dir / "o.json").string(),
                            "--method", "pot_code", "--limit", "1", "--sandbox", "/nonexistent/pot_sandbox", "--out", run});
        CHECK(r.code == 0);
        CHECK(r.err.find("sandbox unavailable") != std::string::npos);
        auto const records = load_records(run);
        REQUIRE(records.size() == 1);
        CHECK(records[0].failure_message == "sandbox unavailable");
    }

    TEST_CASE("stats subcommand")
    {
        auto const r = cli({"stats", "--dataset", quan(), "--field-map", "id=problemid"});
        REQUIRE(r.code == 0);
        auto const j = nlohmann::json::parse(r.out);
        CHECK(j["count_wo_solutions"] == 34);
        CHECK(j["count_with_solutions"] == 8);
    }
}
