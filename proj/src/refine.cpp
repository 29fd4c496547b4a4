// SPDX-License-Identifier: Apache-2.0

#include "structchem/refine.hpp"

#include "structchem/errors.hpp"
#include "text_util.hpp"

#include <ctime>

namespace structchem {

namespace {

using Clock = std::chrono::steady_clock;

std::string utc_now()
{
    auto const now = std::chrono::system_clock::now();
    auto const t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    ::gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

bool has_sentinel(std::string_view text)
{
    return detail::to_lower(text).find(detail::to_lower(answer_sentinel)) != std::string::npos;
}

/// Mutable per-run context: one per problem, never shared between threads.
class Run
{
public:
    Run(RoleBackends const& backends, Problem const& problem, RunMethod method, Mode mode)
        : backends_(backends)
        , started_(Clock::now())
    {
        record_.problem = problem;
        record_.method = method;
        record_.mode = mode;
        record_.started_at = utc_now();
    }

    std::string call(std::string phase, std::size_t iteration, RoleKind role, RenderedPrompt prompt)
    {
        Exchange e;
        e.phase = std::move(phase);
        e.iteration = iteration;
        e.role = role;
        e.model = backends_.roles.at(role).model_name;
        e.prompt = std::move(prompt);
        // Recorded before the call so a failed call still shows its prompt.
        record_.exchanges.push_back(std::move(e));
        auto& done = record_.exchanges.back();

        auto const t0 = Clock::now();
        auto completion = backends_.complete(role, done.prompt);
        done.latency = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0);
        done.usage = completion.usage;
        done.completion = std::move(completion.text);
        return *done.completion;
    }

    void warn(std::string const& where, std::vector<std::string> const& warnings)
    {
        for (auto const& w : warnings)
            record_.warnings.push_back(where + ": " + w);
    }

    void warn(std::string message) { record_.warnings.push_back(std::move(message)); }

    void fail(FailurePhase phase, std::string message, FailureKind kind)
    {
        record_.failure_phase = phase;
        record_.failure_message = std::move(message);
        failure_kind_ = kind;
    }

    RunRecord& record() { return record_; }

    RunRecord finish()
    {
        std::optional<double> predicted;
        if (!record_.failed() && record_.final_answer)
            predicted = record_.final_answer->value;
        auto grade = make_grade(record_.problem.id, predicted, record_.problem.gold_answer, failure_kind_);
        grade.dataset = record_.problem.dataset_tag;
        grade.method = to_string(record_.method);
        grade.mode = to_string(record_.mode);
        record_.grade = std::move(grade);
        record_.wall_clock = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - started_);
        return std::move(record_);
    }

    /// Extracts the sentinel answer from `text`, failing the run if absent.
    bool take_answer(std::string const& text)
    {
        try
        {
            record_.final_answer = extract_final_answer(text);
            return true;
        }
        catch (ParseError const& e)
        {
            fail(FailurePhase::extract_answer, e.what(),
                 has_sentinel(text) ? FailureKind::parse_failure : FailureKind::no_answer);
            return false;
        }
    }

private:
    RoleBackends const& backends_;
    Clock::time_point started_;
    RunRecord record_;
    std::optional<FailureKind> failure_kind_;
};

} // namespace

char const* to_string(ReviewTarget target)
{
    return target == ReviewTarget::previous ? "previous" : "best";
}

ReviewTarget review_target_from_string(std::string_view name)
{
    if (name == "previous")
        return ReviewTarget::previous;
    if (name == "best")
        return ReviewTarget::best;
    throw ConfigError("unknown review target '" + std::string(name) + "' (expected previous or best)");
}

ReviewLoopResult review_loop(Phase phase, ReviewedContent const& initial, double initial_confidence, std::size_t n,
                             ReviewFn const& review, ReviewTarget target, bool always_accept)
{
    ReviewLoopResult out{initial, initial_confidence, {}};
    ReviewedContent previous = initial;

    for (std::size_t i = 1; i <= n; ++i)
    {
        IterationLogEntry entry;
        entry.phase = phase;
        entry.iteration = i;

        std::string note;
        auto const outcome = review(i, target == ReviewTarget::best ? out.accepted : previous, note);
        if (!outcome)
        {
            entry.note = note.empty() ? "unparseable review; skipped" : note;
            out.log.push_back(std::move(entry));
            continue;
        }

        entry.reviewer_confidence = outcome->confidence;
        entry.verdict = outcome->verdict;
        previous = outcome->revised;
        if (!always_accept && outcome->confidence < out.max_score)
        {
            entry.note = "below running max";
        }
        else
        {
            entry.accepted = true;
            out.accepted = outcome->revised;
            out.max_score = outcome->confidence;
        }
        out.log.push_back(std::move(entry));
    }
    return out;
}

Pipeline::Pipeline(RoleBackends backends, PipelineConfig config, std::optional<DemoSet> demos, Sandbox* sandbox,
                   PromptRenderer renderer)
    : backends_(std::move(backends))
    , config_(config)
    , demos_(std::move(demos))
    , sandbox_(sandbox)
    , renderer_(renderer)
{
    for (auto const r : {RoleKind::generator, RoleKind::reviewer, RoleKind::finalizer})
        if (!backends_.backends.contains(r) || !backends_.backends.at(r) || !backends_.roles.contains(r))
            throw ConfigError(std::string("no backend configured for role ") + to_string(r));
    if (config_.mode == Mode::few_shot)
    {
        if (!demos_)
            throw ConfigError("few-shot mode needs demonstrations");
        if (demos_->demos.size() != config_.demo_count)
            throw ConfigError("demonstration set has " + std::to_string(demos_->demos.size()) + " items, expected " +
                              std::to_string(config_.demo_count));
    }
    else if (demos_)
    {
        throw ConfigError("demonstrations given in zero-shot mode");
    }
}

RunRecord Pipeline::run(Problem const& problem, RunMethod method) const
{
    return method == RunMethod::structchem ? run_structured(problem) : run_baseline(problem, method);
}

RunRecord Pipeline::run_structured(Problem const& problem) const
{
    Run run(backends_, problem, RunMethod::structchem, config_.mode);
    DemoSet const* demos = demos_ ? &*demos_ : nullptr;

    std::string text;
    try
    {
        text = run.call("generate", 0, RoleKind::generator, renderer_.render_struct_generate(problem, config_.mode, demos));
    }
    catch (Error const& e)
    {
        run.fail(FailurePhase::generate, e.what(), FailureKind::no_answer);
        return run.finish();
    }

    GenerationParse initial;
    try
    {
        initial = parse_generation(text);
    }
    catch (ParseError const& e)
    {
        run.fail(FailurePhase::parse_generation, e.what(), FailureKind::parse_failure);
        return run.finish();
    }
    run.warn("generate", initial.warnings);

    RefinementState state;
    state.best_formulae = initial.formulae;
    state.best_reasoning = initial.reasoning;
    state.max_f = initial.formulae.confidence;
    state.max_r = initial.reasoning.confidence;

    auto reviewer = [&](Phase phase) -> ReviewFn {
        return [&, phase](std::size_t i, ReviewedContent const& under_review, std::string& note) -> std::optional<ReviewOutcome> {
            auto const phase_name = std::string(phase == Phase::formulae ? "review_formulae" : "review_reasoning");
            auto const prompt =
                phase == Phase::formulae
                    ? renderer_.render_struct_review(Method::struct_review_formulae, problem,
                                                     std::get<FormulaSet>(under_review), nullptr)
                    : renderer_.render_struct_review(Method::struct_review_reasoning, problem, state.best_formulae,
                                                     &std::get<ReasoningTrace>(under_review));
            auto const reply = run.call(phase_name, i, RoleKind::reviewer, prompt);
            try
            {
                auto outcome = parse_review(reply, under_review);
                run.warn(phase_name + "[" + std::to_string(i) + "]", outcome.warnings);
                return outcome;
            }
            catch (ParseError const& e)
            {
                note = std::string("unparseable review; skipped: ") + e.what();
                run.warn(phase_name + "[" + std::to_string(i) + "]: " + note);
                return std::nullopt;
            }
        };
    };

    auto const n = config_.max_iterations;
    try
    {
        auto const loop = review_loop(Phase::formulae, state.best_formulae, state.max_f, n, reviewer(Phase::formulae),
                                      config_.review_target, config_.always_accept_revisions);
        state.best_formulae = std::get<FormulaSet>(loop.accepted);
        state.max_f = loop.max_score;
        state.log.insert(state.log.end(), loop.log.begin(), loop.log.end());
    }
    catch (Error const& e)
    {
        run.record().state = state;
        run.fail(FailurePhase::review_formulae, e.what(), FailureKind::no_answer);
        return run.finish();
    }

    try
    {
        auto const loop = review_loop(Phase::reasoning, state.best_reasoning, state.max_r, n, reviewer(Phase::reasoning),
                                      config_.review_target, config_.always_accept_revisions);
        state.best_reasoning = std::get<ReasoningTrace>(loop.accepted);
        state.max_r = loop.max_score;
        state.log.insert(state.log.end(), loop.log.begin(), loop.log.end());
    }
    catch (Error const& e)
    {
        run.record().state = state;
        run.fail(FailurePhase::review_reasoning, e.what(), FailureKind::no_answer);
        return run.finish();
    }
    run.record().state = state;

    try
    {
        text = run.call("finalize", 0, RoleKind::finalizer,
                        renderer_.render_struct_finalize(problem, state.best_formulae, state.best_reasoning));
    }
    catch (Error const& e)
    {
        run.fail(FailurePhase::finalize, e.what(), FailureKind::no_answer);
        return run.finish();
    }
    run.take_answer(text);
    return run.finish();
}

RunRecord Pipeline::run_baseline(Problem const& problem, RunMethod method) const
{
    auto const tmpl = baseline_template(method);
    Run run(backends_, problem, method, config_.mode);
    DemoSet const* demos = demos_ ? &*demos_ : nullptr;

    std::string text;
    try
    {
        text = run.call("baseline", 0, RoleKind::generator, renderer_.render_baseline(tmpl, problem, config_.mode, demos));
    }
    catch (Error const& e)
    {
        run.fail(FailurePhase::generate, e.what(), FailureKind::no_answer);
        return run.finish();
    }

    if (method != RunMethod::pot_code)
    {
        run.take_answer(text);
        return run.finish();
    }

    auto& record = run.record();
    try
    {
        record.program = parse_code_block(text);
    }
    catch (ParseError const& e)
    {
        run.fail(FailurePhase::extract_answer, e.what(), FailureKind::parse_failure);
        return run.finish();
    }
    if (!sandbox_)
    {
        run.fail(FailurePhase::sandbox, "sandbox unavailable", FailureKind::no_answer);
        return run.finish();
    }
    try
    {
        record.sandbox = sandbox_->execute(*record.program, config_.sandbox_timeout);
    }
    catch (SandboxError const& e)
    {
        run.fail(FailurePhase::sandbox, e.what(), FailureKind::no_answer);
        return run.finish();
    }
    if (!record.sandbox->extracted_value)
    {
        std::string why = record.sandbox->timed_out ? "script timed out" : !record.sandbox->exit_ok ? "script failed" : "script printed no number";
        run.fail(FailurePhase::sandbox, why, FailureKind::no_answer);
        return run.finish();
    }
    FinalAnswer answer;
    answer.value = *record.sandbox->extracted_value;
    auto const lines = detail::split_lines(record.sandbox->stdout_text);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it)
        if (!detail::trim(*it).empty())
        {
            answer.raw_sentence = std::string(detail::trim(*it));
            break;
        }
    record.final_answer = std::move(answer);
    return run.finish();
}

} // namespace structchem
