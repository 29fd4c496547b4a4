// SPDX-License-Identifier: Apache-2.0

#include "structchem/errors.hpp"
#include "structchem/refine.hpp"

#include "test_support.hpp"

#include <doctest.h>

using namespace structchem;

namespace {

struct Fixture
{
    std::shared_ptr<ScriptedOracle> oracle = std::make_shared<ScriptedOracle>();
    Problem problem = support::problem("p1", 2.45);

    Pipeline pipeline(PipelineConfig config = {}, Sandbox* sandbox = nullptr) const
    {
        return Pipeline(single_backend(oracle), config, std::nullopt, sandbox);
    }
};

/// Review function driven by a list of confidences; nullopt entries are
/// unparseable replies. Records what each iteration was shown.
struct ListReviewer
{
    std::vector<std::optional<double>> scores;
    std::vector<std::string> shown;

    ReviewFn fn()
    {
        return [this](std::size_t i, ReviewedContent const& under_review, std::string&) -> std::optional<ReviewOutcome> {
            shown.push_back(std::get<ReasoningTrace>(under_review).steps.at(0));
            auto const s = scores.at(i - 1);
            if (!s)
                return std::nullopt;
            return ReviewOutcome{Verdict::incorrect, ReasoningTrace{{"rev" + std::to_string(i)}, *s}, *s, {}};
        };
    }
};

class FixedSandbox : public Sandbox
{
public:
    explicit FixedSandbox(SandboxResult result)
        : result_(std::move(result))
    {
    }
    SandboxResult execute(std::string const& source, std::chrono::duration<double>) override
    {
        last_source = source;
        return result_;
    }
    std::string last_source;

private:
    SandboxResult result_;
};

class FailingBackend : public ChatBackend
{
public:
    explicit FailingBackend(std::shared_ptr<ChatBackend> inner, std::size_t fail_at)
        : inner_(std::move(inner))
        , fail_at_(fail_at)
    {
    }
    Completion complete(ModelRole const& role, RenderedPrompt const& prompt) override
    {
        if (++calls_ == fail_at_)
            throw BackendError("HTTP 500: upstream exploded");
        return inner_->complete(role, prompt);
    }

private:
    std::shared_ptr<ChatBackend> inner_;
    std::size_t fail_at_;
    std::size_t calls_ = 0;
};

std::string const& user_text(Exchange const& e)
{
    return e.prompt.messages.back().text;
}

} // namespace

TEST_SUITE("refine")
{
    TEST_CASE("review loop: strictly lower is skipped, higher is accepted")
    {
        ListReviewer r{{0.5, 0.9, 0.7}, {}};
        auto const out = review_loop(Phase::reasoning, ReasoningTrace{{"init"}, 0.6}, 0.6, 3, r.fn());
        CHECK(std::get<ReasoningTrace>(out.accepted).steps[0] == "rev2");
        CHECK(out.max_score == doctest::Approx(0.9));
        REQUIRE(out.log.size() == 3);
        CHECK_FALSE(out.log[0].accepted);
        CHECK(out.log[1].accepted);
        CHECK_FALSE(out.log[2].accepted);
        CHECK(out.log[2].iteration == 3);
        // Default target: the previous iteration's revision, accepted or not.
        CHECK(r.shown == std::vector<std::string>{"init", "rev1", "rev2"});
    }

    TEST_CASE("review loop: a tie is accepted")
    {
        ListReviewer r{{0.6}, {}};
        auto const out = review_loop(Phase::reasoning, ReasoningTrace{{"init"}, 0.6}, 0.6, 1, r.fn());
        CHECK(std::get<ReasoningTrace>(out.accepted).steps[0] == "rev1");
        CHECK(out.log[0].accepted);
    }

    TEST_CASE("review loop: n = 0 keeps the initial content")
    {
        ListReviewer r{{}, {}};
        auto const out = review_loop(Phase::formulae, ReasoningTrace{{"init"}, 0.3}, 0.3, 0, r.fn());
        CHECK(std::get<ReasoningTrace>(out.accepted).steps[0] == "init");
        CHECK(out.max_score == 0.3);
        CHECK(out.log.empty());
        CHECK(r.shown.empty());
    }

    TEST_CASE("review loop: best target always shows the accepted content")
    {
        ListReviewer r{{0.5, 0.9, 0.7}, {}};
        (void)review_loop(Phase::reasoning, ReasoningTrace{{"init"}, 0.6}, 0.6, 3, r.fn(), ReviewTarget::best);
        CHECK(r.shown == std::vector<std::string>{"init", "init", "rev2"});
    }

    TEST_CASE("review loop: always-accept adopts every revision")
    {
        ListReviewer r{{0.5, 0.9, 0.7}, {}};
        auto const out = review_loop(Phase::reasoning, ReasoningTrace{{"init"}, 0.6}, 0.6, 3, r.fn(), ReviewTarget::previous, true);
        CHECK(std::get<ReasoningTrace>(out.accepted).steps[0] == "rev3");
        CHECK(out.max_score == doctest::Approx(0.7));
        for (auto const& e : out.log)
            CHECK(e.accepted);
    }

    TEST_CASE("review loop: unparseable review changes nothing")
    {
        ListReviewer r{{std::nullopt, 0.7}, {}};
        auto const out = review_loop(Phase::reasoning, ReasoningTrace{{"init"}, 0.6}, 0.6, 2, r.fn());
        CHECK(std::get<ReasoningTrace>(out.accepted).steps[0] == "rev2");
        REQUIRE(out.log.size() == 2);
        CHECK_FALSE(out.log[0].accepted);
        CHECK_FALSE(out.log[0].reviewer_confidence.has_value());
        CHECK(out.log[0].note.find("unparseable") != std::string::npos);
        CHECK(r.shown == std::vector<std::string>{"init", "init"});
    }

    TEST_CASE("structured run follows the accept rule end to end")
    {
        Fixture fx;
        support::StructuredScript{0.6, 0.6, {0.5, 0.9, 0.7}, {0.4, 0.4, 0.95}}.load(*fx.oracle, "p1");
        auto const record = fx.pipeline().run_structured(fx.problem);

        CHECK_FALSE(record.failed());
        CHECK(record.backend_calls() == 8);
        CHECK(fx.oracle->calls() == 8);
        REQUIRE(record.state.has_value());
        CHECK(record.state->best_formulae.formulae[0].expression == "E = h * nu F2");
        CHECK(record.state->best_reasoning.steps[0] == "Convert the wavelength to metres R3.");
        CHECK(record.state->max_f == doctest::Approx(0.9));
        CHECK(record.state->max_r == doctest::Approx(0.95));
        REQUIRE(record.state->log.size() == 6);
        std::vector<bool> accepted;
        for (auto const& e : record.state->log)
            accepted.push_back(e.accepted);
        CHECK(accepted == std::vector<bool>{false, true, false, false, false, true});

        // The finalizer sees the accepted F2 and R3.
        auto const& fin = user_text(record.exchanges.back());
        CHECK(record.exchanges.back().phase == "finalize");
        CHECK(fin.find("E = h * nu F2") != std::string::npos);
        CHECK(fin.find("metres R3.") != std::string::npos);
        CHECK(fin.find("E = h * nu F1") == std::string::npos);

        // Reasoning reviews see the accepted formulae.
        CHECK(user_text(record.exchanges[4]).find("E = h * nu F2") != std::string::npos);
        // Second formulae review sees the skipped F1 revision.
        CHECK(user_text(record.exchanges[2]).find("E = h * nu F1") != std::string::npos);

        REQUIRE(record.final_answer.has_value());
        CHECK(record.final_answer->value == doctest::Approx(2.45));
        CHECK(record.grade.correct);
    }

    TEST_CASE("structured run: ties are accepted")
    {
        Fixture fx;
        support::StructuredScript{0.6, 0.6, {0.6}, {0.6}}.load(*fx.oracle, "p1");
        PipelineConfig c;
        c.max_iterations = 1;
        auto const record = fx.pipeline(c).run_structured(fx.problem);
        CHECK(record.state->best_formulae.formulae[0].expression == "E = h * nu F1");
        CHECK(record.state->best_reasoning.steps[0] == "Convert the wavelength to metres R1.");
    }

    TEST_CASE("call budget is 2 + 2n")
    {
        for (std::size_t n : {0u, 1u, 2u, 5u})
        {
            CAPTURE(n);
            Fixture fx;
            support::StructuredScript s;
            s.formulae_confidences.assign(n, 0.5);
            s.reasoning_confidences.assign(n, 0.5);
            s.load(*fx.oracle, "p1");
            PipelineConfig c;
            c.max_iterations = n;
            auto const record = fx.pipeline(c).run_structured(fx.problem);
            CHECK(record.backend_calls() == 2 + 2 * n);
            CHECK(fx.oracle->remaining() == 0);
            CHECK_FALSE(record.failed());
        }
    }

    TEST_CASE("n = 0 finalizes the initial generation")
    {
        Fixture fx;
        support::StructuredScript{0.2, 0.3, {}, {}}.load(*fx.oracle, "p1");
        PipelineConfig c;
        c.max_iterations = 0;
        auto const record = fx.pipeline(c).run_structured(fx.problem);
        CHECK(record.exchanges.size() == 2);
        CHECK(record.state->best_formulae.formulae[0].expression == "E = h * nu F0");
        CHECK(record.state->max_f == doctest::Approx(0.2));
    }

    TEST_CASE("always-accept ablation")
    {
        Fixture fx;
        support::StructuredScript{0.6, 0.6, {0.5, 0.9, 0.7}, {0.4, 0.4, 0.95}}.load(*fx.oracle, "p1");
        PipelineConfig c;
        c.always_accept_revisions = true;
        auto const record = fx.pipeline(c).run_structured(fx.problem);
        CHECK(record.state->best_formulae.formulae[0].expression == "E = h * nu F3");
        CHECK(record.state->max_f == doctest::Approx(0.7));
        CHECK(record.state->best_reasoning.steps[0] == "Convert the wavelength to metres R3.");
    }

    TEST_CASE("unparseable review is logged and skipped")
    {
        Fixture fx;
        auto replies = support::StructuredScript{0.6, 0.6, {0.9}, {0.9}}.replies();
        replies[1] = "I have no idea what format you want.";
        for (auto& r : replies)
            fx.oracle->push_for_problem("p1", r);
        PipelineConfig c;
        c.max_iterations = 1;
        auto const record = fx.pipeline(c).run_structured(fx.problem);
        CHECK_FALSE(record.failed());
        CHECK(record.state->best_formulae.formulae[0].expression == "E = h * nu F0");
        CHECK(record.state->log[0].note.find("unparseable") != std::string::npos);
        CHECK(record.state->best_reasoning.steps[0] == "Convert the wavelength to metres R1.");
        CHECK_FALSE(record.warnings.empty());
    }

    TEST_CASE("failures map to a phase and count as incorrect")
    {
        SUBCASE("unparseable generation")
        {
            Fixture fx;
            fx.oracle->push("just prose, no blocks");
            auto const record = fx.pipeline().run_structured(fx.problem);
            CHECK(record.failure_phase == FailurePhase::parse_generation);
            CHECK(record.grade.failure_kind == FailureKind::parse_failure);
            CHECK_FALSE(record.grade.correct);
        }
        SUBCASE("backend error during reasoning review")
        {
            Fixture fx;
            support::StructuredScript{0.6, 0.6, {0.5, 0.9, 0.7}, {0.4, 0.4, 0.95}}.load(*fx.oracle, "p1");
            auto const failing = std::make_shared<FailingBackend>(fx.oracle, 6);
            Pipeline p(single_backend(failing), {});
            auto const record = p.run_structured(fx.problem);
            CHECK(record.failure_phase == FailurePhase::review_reasoning);
            CHECK(record.failure_message.find("upstream exploded") != std::string::npos);
            CHECK(record.grade.failure_kind == FailureKind::no_answer);
            CHECK(record.exchanges.size() == 6);
            CHECK_FALSE(record.exchanges.back().completion.has_value());
            REQUIRE(record.state.has_value());
            CHECK(record.state->best_formulae.formulae[0].expression == "E = h * nu F2");
        }
        SUBCASE("finalizer without the sentinel")
        {
            Fixture fx;
            auto replies = support::StructuredScript{0.6, 0.6, {}, {}}.replies();
            replies.back() = "The energy is 2.45 J.";
            for (auto& r : replies)
                fx.oracle->push(r);
            PipelineConfig c;
            c.max_iterations = 0;
            auto const record = fx.pipeline(c).run_structured(fx.problem);
            CHECK(record.failure_phase == FailurePhase::extract_answer);
            CHECK(record.grade.failure_kind == FailureKind::no_answer);
        }
        SUBCASE("sentinel with no number")
        {
            Fixture fx;
            fx.oracle->push("The answer is therefore not computable.");
            auto const record = fx.pipeline().run_baseline(fx.problem, RunMethod::cot);
            CHECK(record.failure_phase == FailurePhase::extract_answer);
            CHECK(record.grade.failure_kind == FailureKind::parse_failure);
        }
        SUBCASE("oracle exhausted")
        {
            Fixture fx;
            auto const record = fx.pipeline().run_baseline(fx.problem, RunMethod::direct);
            CHECK(record.failure_phase == FailurePhase::generate);
            CHECK(record.exchanges.size() == 1);
        }
    }

    TEST_CASE("baselines make one call")
    {
        for (auto const m : {RunMethod::direct, RunMethod::system, RunMethod::cot})
        {
            Fixture fx;
            fx.oracle->push("Some work.\nThe answer is therefore 2.500.");
            auto const record = fx.pipeline().run(fx.problem, m);
            CHECK(record.backend_calls() == 1);
            CHECK(record.final_answer->value == doctest::Approx(2.5));
            CHECK(record.grade.correct);
            CHECK(record.grade.method == to_string(m));
            CHECK_FALSE(record.state.has_value());
        }
    }

    TEST_CASE("pot_code without a sandbox reports it unavailable")
    {
        Fixture fx;
        fx.oracle->push("```python\nprint(2.45)\n```");
        auto const record = fx.pipeline().run(fx.problem, RunMethod::pot_code);
        CHECK(record.failure_phase == FailurePhase::sandbox);
        CHECK(record.failure_message == "sandbox unavailable");
        CHECK(record.program == std::optional<std::string>("print(2.45)"));
        CHECK_FALSE(record.grade.correct);
    }

    TEST_CASE("pot_code uses the sandbox's extracted value")
    {
        Fixture fx;
        fx.oracle->push("```python\nprint(2.45)\n```");
        FixedSandbox sandbox({"2.45\n", "", true, false, 0.1, 2.45});
        auto const record = fx.pipeline({}, &sandbox).run(fx.problem, RunMethod::pot_code);
        CHECK(sandbox.last_source == "print(2.45)");
        CHECK_FALSE(record.failed());
        CHECK(record.final_answer->value == doctest::Approx(2.45));
        CHECK(record.grade.correct);

        Fixture timed_out;
        timed_out.oracle->push("```python\nwhile True: pass\n```");
        FixedSandbox slow({"", "", false, true, 20.0, std::nullopt});
        auto const failed = timed_out.pipeline({}, &slow).run(timed_out.problem, RunMethod::pot_code);
        CHECK(failed.failure_message == "script timed out");

        Fixture no_code;
        no_code.oracle->push("I would write some code.");
        auto const nc = no_code.pipeline({}, &sandbox).run(no_code.problem, RunMethod::pot_code);
        CHECK(nc.failure_phase == FailurePhase::extract_answer);
        CHECK(nc.grade.failure_kind == FailureKind::parse_failure);
    }

    TEST_CASE("pipeline configuration checks")
    {
        auto const oracle = std::make_shared<ScriptedOracle>();
        PipelineConfig few;
        few.mode = Mode::few_shot;
        CHECK_THROWS_AS(Pipeline(single_backend(oracle), few), ConfigError);
        DemoSet two;
        two.demos = {support::problem("a", 1, "", "s"), support::problem("b", 1, "", "s")};
        CHECK_THROWS_AS(Pipeline(single_backend(oracle), few, two), ConfigError);
        CHECK_THROWS_AS(Pipeline(single_backend(oracle), PipelineConfig{}, two), ConfigError);
        RoleBackends missing = single_backend(oracle);
        missing.backends.erase(RoleKind::reviewer);
        CHECK_THROWS_AS(Pipeline(missing, PipelineConfig{}), ConfigError);
        CHECK(review_target_from_string("best") == ReviewTarget::best);
        CHECK_THROWS_AS(review_target_from_string("worst"), ConfigError);
    }
}
