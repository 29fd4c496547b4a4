// SPDX-License-Identifier: Apache-2.0

#include "structchem/cli.hpp"

#include "structchem/annotations.hpp"
#include "structchem/errors.hpp"
#include "structchem/export.hpp"
#include "structchem/harness.hpp"

#include <CLI11.hpp>

#include <ctime>
#include <iostream>
#include <memory>

namespace structchem {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

constexpr char const* tool_version = "0.1.0";

struct RunOptions
{
    std::string dataset;
    std::vector<std::string> field_map;
    std::string split = "wo_solutions";
    std::size_t limit = 0;
    std::string method = "structchem";
    std::string mode = "zero_shot";
    std::size_t k = 3;
    std::size_t n = 3;
    std::uint64_t seed = 0;
    std::size_t concurrency = 4;
    std::string roles;
    std::string model;
    std::string base_url = EndpointConfig{}.base_url;
    std::string api_key_env = EndpointConfig{}.api_key_env;
    double temperature = 0.0;
    std::string oracle;
    std::string out;
    bool overwrite = false;
    std::string review_target = "previous";
    bool always_accept = false;
    std::string sandbox;
    double sandbox_timeout = static_cast<double>(default_sandbox_timeout.count());
    std::string templates;
};

struct RunDirOptions
{
    std::vector<std::string> runs;
    std::string out;
    std::string format = "original";
    bool only_correct = false;
    std::string problem;
    std::string category;
    std::string note;
};

struct StatsOptions
{
    std::string dataset;
    std::vector<std::string> field_map;
    std::string run;
    std::string out;
};

std::string utc_now()
{
    auto const t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    ::gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void add_run_options(CLI::App& sub, RunOptions& o, bool scripted)
{
    sub.add_option("--dataset", o.dataset, "Problem file (JSON array, {\"problems\": [...]}, or JSON Lines)")->required();
    sub.add_option("--field-map", o.field_map, "canonical=source field renames, e.g. id=problemid");
    sub.add_option("--split", o.split, "Problems to evaluate")
        ->check(CLI::IsMember({"wo_solutions", "with_solutions", "all"}))
        ->capture_default_str();
    sub.add_option("--limit", o.limit, "Evaluate only the first N problems (0: all)");
    sub.add_option("--method", o.method)
        ->check(CLI::IsMember({"direct", "system", "cot", "pot_code", "structchem"}))
        ->capture_default_str();
    sub.add_option("--mode", o.mode)->check(CLI::IsMember({"zero_shot", "few_shot"}))->capture_default_str();
    sub.add_option("--k", o.k, "Demonstrations in few-shot mode")->capture_default_str();
    sub.add_option("--n", o.n, "Review iterations per phase")->capture_default_str();
    sub.add_option("--seed", o.seed, "Demonstration sampling seed")->capture_default_str();
    sub.add_option("--concurrency", o.concurrency, "Problems in flight and request limit")
        ->check(CLI::Range(1, 256))
        ->capture_default_str();
    sub.add_option("--out", o.out, "Run output directory")->required();
    sub.add_flag("--overwrite", o.overwrite, "Reuse an output directory that already holds a run");
    sub.add_option("--review-target", o.review_target, "What each review iteration revises")
        ->check(CLI::IsMember({"previous", "best"}))
        ->capture_default_str();
    sub.add_flag("--always-accept", o.always_accept, "Adopt every revision regardless of confidence");
    sub.add_option("--sandbox", o.sandbox, "Runner command for pot_code, e.g. \"python3 -m pot_sandbox\"");
    sub.add_option("--sandbox-timeout", o.sandbox_timeout, "Seconds per script")->capture_default_str();
    sub.add_option("--templates", o.templates, "Template directory replacing the built-in prompts");
    if (scripted)
    {
        sub.add_option("--oracle", o.oracle, "Scripted-oracle JSON file answering every role")->required();
        return;
    }
    sub.add_option("--roles", o.roles, "JSON file with generator/reviewer/finalizer endpoints");
    sub.add_option("--model", o.model, "Model for all roles when --roles is absent");
    sub.add_option("--base-url", o.base_url)->capture_default_str();
    sub.add_option("--api-key-env", o.api_key_env, "Variable holding the API key (empty: none)")->capture_default_str();
    sub.add_option("--temperature", o.temperature)->capture_default_str();
}

std::vector<GradeResult> grades_of(std::vector<RunRecord> const& records)
{
    std::vector<GradeResult> out;
    out.reserve(records.size());
    for (auto const& r : records)
        out.push_back(r.grade);
    return out;
}

void write_accuracy(fs::path const& reports, std::vector<RunRecord> const& records, std::ostream& out)
{
    auto const grades = grades_of(records);
    auto const table = aggregate(grades);
    auto const text = format_table(table);
    write_text_file(reports / "accuracy.json", to_json(table).dump(2) + "\n");
    write_text_file(reports / "accuracy.txt", text);
    out << text;
}

void regrade(RunRecord& r)
{
    std::optional<double> predicted;
    if (!r.failed() && r.final_answer)
        predicted = r.final_answer->value;
    std::optional<FailureKind> kind;
    if (!predicted && r.grade.failure_kind && *r.grade.failure_kind != FailureKind::out_of_tolerance)
        kind = r.grade.failure_kind;
    auto g = make_grade(r.problem.id, predicted, r.problem.gold_answer, kind);
    g.dataset = r.problem.dataset_tag;
    g.method = to_string(r.method);
    g.mode = to_string(r.mode);
    r.grade = std::move(g);
}

ojson role_summary(RoleBackends const& backends, std::optional<RoleTable> const& table)
{
    ojson roles;
    for (auto const& [kind, role] : backends.roles)
    {
        ojson entry{{"model", role.model_name}, {"temperature", role.temperature}};
        if (table)
        {
            auto const& ep = table->at(kind).endpoint;
            entry["endpoint"] = ep.kind;
            if (ep.kind == "openai")
                entry["base_url"] = ep.base_url;
            else
                entry["oracle_file"] = ep.oracle_file.string();
        }
        roles[to_string(kind)] = std::move(entry);
    }
    return roles;
}

int do_run(RunOptions const& o, bool scripted, std::ostream& out, std::ostream& err)
{
    LoadOptions lo;
    lo.field_map = parse_field_map(o.field_map);
    auto const ds = load_dataset(o.dataset, lo);

    std::vector<Problem> problems;
    if (o.split != "with_solutions")
        problems.insert(problems.end(), ds.problems_wo_solutions.begin(), ds.problems_wo_solutions.end());
    if (o.split != "wo_solutions")
        problems.insert(problems.end(), ds.problems_with_solutions.begin(), ds.problems_with_solutions.end());
    if (o.limit > 0 && problems.size() > o.limit)
        problems.resize(o.limit);

    auto const method = run_method_from_string(o.method);
    PipelineConfig cfg;
    cfg.max_iterations = o.n;
    cfg.demo_count = o.k;
    cfg.mode = mode_from_string(o.mode);
    cfg.review_target = review_target_from_string(o.review_target);
    cfg.always_accept_revisions = o.always_accept;
    cfg.sandbox_timeout = std::chrono::duration<double>(o.sandbox_timeout);

    RoleBackends backends;
    std::optional<RoleTable> table;
    if (scripted)
    {
        backends = single_backend(ScriptedOracle::from_file(o.oracle));
    }
    else
    {
        nlohmann::json role_config;
        if (!o.roles.empty())
        {
            try
            {
                role_config = nlohmann::json::parse(read_text_file(o.roles));
            }
            catch (nlohmann::json::exception const& e)
            {
                throw ConfigError(o.roles + ": " + e.what());
            }
        }
        else if (!o.model.empty())
        {
            role_config = {{"model", o.model}, {"base_url", o.base_url}, {"temperature", o.temperature}};
            role_config["api_key_env"] = o.api_key_env.empty() ? nlohmann::json(nullptr) : nlohmann::json(o.api_key_env);
        }
        else
        {
            throw ConfigError("no model configured: pass --roles or --model (or use the oracle subcommand)");
        }
        table = configure_roles(role_config);
        backends = make_backends(*table, static_cast<std::ptrdiff_t>(o.concurrency));
    }

    TemplateLibrary custom;
    TemplateLibrary const* library = &TemplateLibrary::builtin();
    if (!o.templates.empty())
    {
        custom = TemplateLibrary::load(o.templates);
        library = &custom;
    }

    std::optional<DemoSet> demos;
    if (cfg.mode == Mode::few_shot)
        demos = sample_demonstrations(ds, o.k, o.seed);

    std::unique_ptr<SubprocessSandbox> sandbox;
    if (method == RunMethod::pot_code)
    {
        auto const command = o.sandbox.empty() ? std::nullopt : resolve_sandbox_command(o.sandbox);
        if (command)
            sandbox = std::make_unique<SubprocessSandbox>(*command);
        else
            err << "warning: sandbox unavailable; pot_code answers will be recorded as failed\n";
    }

    fs::path const run_dir(o.out);
    if (fs::exists(run_dir / "manifest.json") && !o.overwrite)
        throw ConfigError(run_dir.string() + " already holds a run (pass --overwrite to replace it)");
    if (fs::exists(run_dir / "records"))
        fs::remove_all(run_dir / "records");

    Pipeline const pipeline(backends, cfg, demos, sandbox.get(), PromptRenderer(*library));

    ojson manifest;
    manifest["tool_version"] = tool_version;
    manifest["created_at"] = utc_now();
    manifest["status"] = "running";
    manifest["dataset"] = {{"path", fs::absolute(o.dataset).string()},
                           {"name", ds.name},
                           {"wo_solutions", ds.problems_wo_solutions.size()},
                           {"with_solutions", ds.problems_with_solutions.size()},
                           {"split", o.split},
                           {"evaluated", problems.size()}};
    manifest["method"] = o.method;
    manifest["mode"] = o.mode;
    manifest["k"] = o.k;
    manifest["n"] = o.n;
    manifest["seed"] = o.seed;
    manifest["review_target"] = o.review_target;
    manifest["always_accept_revisions"] = o.always_accept;
    manifest["concurrency"] = o.concurrency;
    manifest["roles"] = role_summary(backends, table);
    manifest["template_version"] = library->version();
    manifest["templates"] = o.templates.empty() ? ojson("builtin") : ojson(fs::absolute(o.templates).string());
    if (demos)
    {
        auto ids = ojson::array();
        for (auto const& d : demos->demos)
            ids.push_back(d.id);
        manifest["demonstrations"] = std::move(ids);
    }
    if (method == RunMethod::pot_code)
        manifest["sandbox"] = sandbox ? ojson(o.sandbox) : ojson(nullptr);
    write_manifest(run_dir, manifest);

    HarnessOptions ho;
    ho.concurrency = o.concurrency;
    ho.on_record = [&](RunRecord const& r) { write_record(run_dir, r); };
    auto const records = run_problems(pipeline, problems, method, ho);

    std::size_t failed = 0;
    std::size_t correct = 0;
    for (auto const& r : records)
    {
        failed += r.failed() ? 1 : 0;
        correct += r.grade.correct ? 1 : 0;
    }
    manifest["status"] = "complete";
    manifest["summary"] = {{"problems", records.size()}, {"correct", correct}, {"failed", failed}};
    write_manifest(run_dir, manifest);

    write_accuracy(run_dir / "reports", records, out);
    if (failed > 0)
        err << failed << " of " << records.size() << " problem(s) failed; see failure_phase in the records\n";
    return 0;
}

int do_grade(RunDirOptions const& o, std::ostream& out)
{
    std::vector<RunRecord> all;
    for (auto const& run : o.runs)
    {
        auto records = load_records(run);
        for (auto& r : records)
        {
            regrade(r);
            write_record(run, r);
        }
        write_accuracy(fs::path(run) / "reports", records, out);
    }
    return 0;
}

int do_report(RunDirOptions const& o, std::ostream& out)
{
    std::vector<RunRecord> records;
    std::vector<Annotation> annotations;
    for (auto const& run : o.runs)
    {
        auto r = load_records(run);
        records.insert(records.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
        auto a = AnnotationStore(fs::path(run) / "annotations.json").annotations();
        annotations.insert(annotations.end(), a.begin(), a.end());
    }
    fs::path const reports = o.out.empty() ? fs::path(o.runs.front()) / "reports" : fs::path(o.out);
    write_accuracy(reports, records, out);

    AnnotationStore merged;
    for (auto const& a : annotations)
    {
        RunRecord stub;
        stub.problem.id = a.problem_id;
        stub.problem.dataset_tag = a.dataset;
        stub.method = run_method_from_string(a.method);
        stub.mode = mode_from_string(a.mode);
        merged.annotate(stub, a.category, a.note);
    }
    write_text_file(reports / "error_distribution.json", to_json(merged.distribution()).dump(2) + "\n");

    // Step statistics per dataset, over structured runs.
    std::map<std::string, std::pair<Dataset, std::vector<TraceSummary>>> by_dataset;
    for (auto const& r : records)
    {
        auto& [ds, traces] = by_dataset[r.problem.dataset_tag];
        ds.name = r.problem.dataset_tag;
        (r.problem.solution ? ds.problems_with_solutions : ds.problems_wo_solutions).push_back(r.problem);
        if (r.state)
            traces.push_back({r.state->best_reasoning.steps.size(), r.state->best_formulae.formulae.size()});
    }
    auto stats = ojson::array();
    for (auto const& [name, entry] : by_dataset)
    {
        auto const& [ds, traces] = entry;
        stats.push_back(stats_to_json(
            dataset_stats(ds, traces.empty() ? std::nullopt : std::optional<std::vector<TraceSummary>>(traces))));
    }
    write_text_file(reports / "step_stats.json", stats.dump(2) + "\n");
    return 0;
}

int do_export(RunDirOptions const& o, std::ostream& err)
{
    std::vector<RunRecord> records;
    std::string source;
    for (auto const& run : o.runs)
    {
        auto r = load_records(run);
        records.insert(records.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
        source += (source.empty() ? "" : ",") + run;
    }
    auto const format = finetune_format_from_string(o.format);
    fs::path const path = o.out.empty() ? fs::path(o.runs.front()) / "corpora" / (o.format + ".jsonl") : fs::path(o.out);
    auto const corpus = export_finetune(records, format, o.only_correct, path, source);
    for (auto const& w : corpus.warnings)
        err << "warning: " << w << '\n';
    err << "wrote " << corpus.examples.size() << " example(s) to " << path.string() << '\n';
    return 0;
}

int do_annotate(RunDirOptions const& o, std::ostream& out)
{
    auto const& run = o.runs.front();
    auto const records = load_records(run);
    auto const it = std::find_if(records.begin(), records.end(), [&](RunRecord const& r) { return r.problem.id == o.problem; });
    if (it == records.end())
        throw AnnotationError("no record for problem '" + o.problem + "' in " + run);
    AnnotationStore store(fs::path(run) / "annotations.json");
    store.annotate(*it, error_category_from_string(o.category), o.note);
    out << "annotated " << o.problem << " as " << o.category << '\n';
    return 0;
}

int do_stats(StatsOptions const& o, std::ostream& out)
{
    LoadOptions lo;
    lo.field_map = parse_field_map(o.field_map);
    auto const ds = load_dataset(o.dataset, lo);
    std::optional<std::vector<TraceSummary>> traces;
    if (!o.run.empty())
    {
        traces.emplace();
        for (auto const& r : load_records(o.run))
            if (r.state)
                traces->push_back({r.state->best_reasoning.steps.size(), r.state->best_formulae.formulae.size()});
    }
    auto const text = stats_to_json(dataset_stats(ds, traces)).dump(2) + "\n";
    if (o.out.empty())
        out << text;
    else
        write_text_file(o.out, text);
    return 0;
}

} // namespace

int cli_main(std::vector<std::string> const& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Structured formulae/reasoning/review pipeline for chemistry problems, with baselines and grading",
                 "structchem"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML or INI file with the same keys as the flags");
    app.set_version_flag("--version", tool_version);

    RunOptions run_opts;
    auto* run = app.add_subcommand("run", "Evaluate a dataset against live model endpoints");
    add_run_options(*run, run_opts, false);

    RunOptions oracle_opts;
    auto* oracle = app.add_subcommand("oracle", "Evaluate a dataset against a scripted-oracle file");
    add_run_options(*oracle, oracle_opts, true);

    RunDirOptions grade_opts;
    auto* grade = app.add_subcommand("grade", "Re-grade the records of finished runs");
    grade->add_option("--run", grade_opts.runs, "Run directory")->required();

    RunDirOptions report_opts;
    auto* report = app.add_subcommand("report", "Accuracy table, error distribution and step statistics");
    report->add_option("--run", report_opts.runs, "Run directory (repeat to combine runs)")->required();
    report->add_option("--out", report_opts.out, "Report directory (default: <first run>/reports)");

    RunDirOptions export_opts;
    auto* exp = app.add_subcommand("export", "Write a fine-tuning corpus");
    exp->add_option("--run", export_opts.runs, "Run directory (repeatable)")->required();
    exp->add_option("--format", export_opts.format)
        ->check(CLI::IsMember({"original", "cot_trace", "structured_trace"}))
        ->capture_default_str();
    exp->add_flag("--only-correct", export_opts.only_correct, "Keep only correctly graded records");
    exp->add_option("--out", export_opts.out, "Corpus file (default: <first run>/corpora/<format>.jsonl)");

    RunDirOptions annotate_opts;
    auto* annotate = app.add_subcommand("annotate", "Label the error category of an incorrect record");
    annotate->add_option("--run", annotate_opts.runs, "Run directory")->required()->expected(1);
    annotate->add_option("--problem", annotate_opts.problem, "Problem id")->required();
    annotate->add_option("--category", annotate_opts.category)
        ->required()
        ->check(CLI::IsMember({"principle", "factual", "reasoning", "calculation"}));
    annotate->add_option("--note", annotate_opts.note);

    StatsOptions stats_opts;
    auto* stats = app.add_subcommand("stats", "Split counts and reasoning-step histogram");
    stats->add_option("--dataset", stats_opts.dataset)->required();
    stats->add_option("--field-map", stats_opts.field_map);
    stats->add_option("--run", stats_opts.run, "Run directory supplying reasoning traces");
    stats->add_option("--out", stats_opts.out, "Output file (default: stdout)");

    try
    {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    }
    catch (CLI::ParseError const& e)
    {
        auto const code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try
    {
        if (run->parsed())
            return do_run(run_opts, false, out, err);
        if (oracle->parsed())
            return do_run(oracle_opts, true, out, err);
        if (grade->parsed())
            return do_grade(grade_opts, out);
        if (report->parsed())
            return do_report(report_opts, out);
        if (exp->parsed())
            return do_export(export_opts, err);
        if (annotate->parsed())
            return do_annotate(annotate_opts, out);
        if (stats->parsed())
            return do_stats(stats_opts, out);
    }
    catch (std::exception const& e)
    {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

} // namespace structchem
