// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "structchem/backend.hpp"
#include "structchem/dataset.hpp"
#include "structchem/grade.hpp"
#include "structchem/parse.hpp"
#include "structchem/prompts.hpp"
#include "structchem/sandbox.hpp"

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace structchem {

/// What the harness runs per problem: a baseline or the structured pipeline.
enum class RunMethod
{
    direct,
    system,
    cot,
    pot_code,
    structchem,
};

char const* to_string(RunMethod method);
RunMethod run_method_from_string(std::string_view name);
/// The baseline template for a non-structured run method.
Method baseline_template(RunMethod method);

enum class Phase
{
    formulae,
    reasoning,
};

char const* to_string(Phase phase);
Phase phase_from_string(std::string_view name);

enum class FailurePhase
{
    generate,
    parse_generation,
    review_formulae,
    review_reasoning,
    finalize,
    extract_answer,
    sandbox,
};

char const* to_string(FailurePhase phase);
FailurePhase failure_phase_from_string(std::string_view name);

struct IterationLogEntry
{
    Phase phase = Phase::formulae;
    /// 1-based review iteration.
    std::size_t iteration = 0;
    /// Absent when the reply could not be parsed.
    std::optional<double> reviewer_confidence;
    std::optional<Verdict> verdict;
    bool accepted = false;
    std::string note;

    bool operator==(IterationLogEntry const&) const = default;
};

struct RefinementState
{
    FormulaSet best_formulae;
    ReasoningTrace best_reasoning;
    double max_f = 0.0;
    double max_r = 0.0;
    std::vector<IterationLogEntry> log;

    bool operator==(RefinementState const&) const = default;
};

/// One backend call: the prompt sent and the raw reply (absent if the call failed).
struct Exchange
{
    /// generate, review_formulae, review_reasoning, finalize, or baseline.
    std::string phase;
    std::size_t iteration = 0;
    RoleKind role = RoleKind::generator;
    std::string model;
    RenderedPrompt prompt;
    std::optional<std::string> completion;
    std::optional<Usage> usage;
    std::chrono::milliseconds latency{0};
};

struct RunRecord
{
    Problem problem;
    RunMethod method = RunMethod::structchem;
    Mode mode = Mode::zero_shot;
    std::vector<Exchange> exchanges;
    std::optional<RefinementState> state;
    std::optional<FinalAnswer> final_answer;
    std::optional<std::string> program;
    std::optional<SandboxResult> sandbox;
    GradeResult grade;
    std::optional<FailurePhase> failure_phase;
    std::string failure_message;
    std::vector<std::string> warnings;

    std::chrono::milliseconds wall_clock{0};
    std::string started_at;

    [[nodiscard]] bool failed() const { return failure_phase.has_value(); }
    [[nodiscard]] std::size_t backend_calls() const { return exchanges.size(); }
};

nlohmann::ordered_json to_json(FormulaSet const& f);
nlohmann::ordered_json to_json(ReasoningTrace const& r);
FormulaSet formula_set_from_json(nlohmann::json const& j);
ReasoningTrace reasoning_trace_from_json(nlohmann::json const& j);

/// Timing fields (latencies, wall clock, start time) live under a single
/// "timing" key; with include_timing=false the output is reproducible byte
/// for byte under a scripted oracle.
nlohmann::ordered_json to_json(RunRecord const& record, bool include_timing = true);
RunRecord record_from_json(nlohmann::json const& j);

} // namespace structchem
