// SPDX-License-Identifier: Apache-2.0

// Per-problem pipelines: the structured generate / review / finalize engine
// and the single-call baselines.

#pragma once

#include "structchem/backend.hpp"
#include "structchem/dataset.hpp"
#include "structchem/prompts.hpp"
#include "structchem/run_record.hpp"
#include "structchem/sandbox.hpp"

#include <chrono>
#include <functional>
#include <optional>

namespace structchem {

/// Which content iteration i of a review loop looks at.
enum class ReviewTarget
{
    /// The previous iteration's revision, accepted or not.
    previous,
    /// The best content accepted so far.
    best,
};

char const* to_string(ReviewTarget target);
ReviewTarget review_target_from_string(std::string_view name);

struct PipelineConfig
{
    std::size_t max_iterations = 3;
    std::size_t demo_count = 3;
    Mode mode = Mode::zero_shot;
    ReviewTarget review_target = ReviewTarget::previous;
    /// Accept every parsed revision regardless of its confidence.
    bool always_accept_revisions = false;
    std::chrono::duration<double> sandbox_timeout = default_sandbox_timeout;
};

struct ReviewLoopResult
{
    ReviewedContent accepted;
    double max_score = 0.0;
    std::vector<IterationLogEntry> log;
};

/// Reviews `under_review` in iteration i (1-based). Returns nullopt when the
/// reply could not be parsed; `note` then says why. Backend errors propagate.
using ReviewFn = std::function<std::optional<ReviewOutcome>(std::size_t i, ReviewedContent const& under_review,
                                                            std::string& note)>;

/// Runs exactly n review iterations. A revision whose confidence is below the
/// running max is skipped; equal or higher is accepted and becomes the max.
/// An unparseable review leaves everything unchanged.
ReviewLoopResult review_loop(Phase phase, ReviewedContent const& initial, double initial_confidence, std::size_t n,
                             ReviewFn const& review, ReviewTarget target = ReviewTarget::previous,
                             bool always_accept = false);

class Pipeline
{
public:
    /// In few-shot mode `demos` must be given. `sandbox` may be null, in which
    /// case pot_code runs fail with "sandbox unavailable".
    Pipeline(RoleBackends backends, PipelineConfig config, std::optional<DemoSet> demos = std::nullopt,
             Sandbox* sandbox = nullptr, PromptRenderer renderer = PromptRenderer());

    /// generate, n formulae reviews, n reasoning reviews, finalize: 2 + 2n calls
    /// unless a call fails.
    [[nodiscard]] RunRecord run_structured(Problem const& problem) const;

    /// One generator call, plus one sandbox execution for pot_code.
    [[nodiscard]] RunRecord run_baseline(Problem const& problem, RunMethod method) const;

    [[nodiscard]] RunRecord run(Problem const& problem, RunMethod method) const;

    [[nodiscard]] PipelineConfig const& config() const { return config_; }
    [[nodiscard]] std::optional<DemoSet> const& demos() const { return demos_; }

private:
    RoleBackends backends_;
    PipelineConfig config_;
    std::optional<DemoSet> demos_;
    Sandbox* sandbox_;
    PromptRenderer renderer_;
};

} // namespace structchem
