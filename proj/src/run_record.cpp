// SPDX-License-Identifier: Apache-2.0

#include "structchem/run_record.hpp"

#include "structchem/errors.hpp"

#include <array>

namespace structchem {

namespace {

using ojson = nlohmann::ordered_json;
using nlohmann::json;

constexpr std::array<RunMethod, 5> all_run_methods{
    RunMethod::direct, RunMethod::system, RunMethod::cot, RunMethod::pot_code, RunMethod::structchem,
};

constexpr std::array<FailurePhase, 7> all_failure_phases{
    FailurePhase::generate,      FailurePhase::parse_generation, FailurePhase::review_formulae,
    FailurePhase::review_reasoning, FailurePhase::finalize,      FailurePhase::extract_answer,
    FailurePhase::sandbox,
};

template <typename T>
ojson opt(std::optional<T> const& v)
{
    return v ? ojson(*v) : ojson(nullptr);
}

ChatRole chat_role_from_string(std::string const& s)
{
    for (auto const r : {ChatRole::system, ChatRole::user, ChatRole::assistant})
        if (s == to_string(r))
            return r;
    throw Error("unknown chat role '" + s + "'");
}

ojson problem_json(Problem const& p)
{
    ojson j;
    j["id"] = p.id;
    j["dataset"] = p.dataset_tag;
    j["statement"] = p.statement;
    j["unit"] = p.unit;
    j["gold_answer"] = p.gold_answer;
    j["gold_answer_text"] = p.gold_answer_text;
    j["solution"] = opt(p.solution);
    return j;
}

Problem problem_from(json const& j)
{
    Problem p;
    p.id = j.at("id").get<std::string>();
    p.dataset_tag = j.value("dataset", "");
    p.statement = j.value("statement", "");
    p.unit = j.value("unit", "");
    p.gold_answer = j.at("gold_answer").get<double>();
    p.gold_answer_text = j.value("gold_answer_text", "");
    if (j.contains("solution") && !j["solution"].is_null())
        p.solution = j["solution"].get<std::string>();
    return p;
}

ojson prompt_json(RenderedPrompt const& p)
{
    ojson j;
    j["method"] = to_string(p.method);
    j["fingerprint"] = p.fingerprint();
    auto messages = ojson::array();
    for (auto const& m : p.messages)
        messages.push_back({{"role", to_string(m.role)}, {"content", m.text}});
    j["messages"] = std::move(messages);
    return j;
}

RenderedPrompt prompt_from(json const& j, std::string const& problem_id)
{
    RenderedPrompt p;
    p.method = method_from_string(j.at("method").get<std::string>());
    p.problem_id = problem_id;
    for (auto const& m : j.at("messages"))
        p.messages.push_back({chat_role_from_string(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
    return p;
}

ojson usage_json(std::optional<Usage> const& u)
{
    if (!u)
        return nullptr;
    return {{"prompt_tokens", u->prompt_tokens}, {"completion_tokens", u->completion_tokens}, {"total_tokens", u->total_tokens}};
}

ojson log_json(IterationLogEntry const& e)
{
    ojson j;
    j["phase"] = to_string(e.phase);
    j["iteration"] = e.iteration;
    j["reviewer_confidence"] = opt(e.reviewer_confidence);
    j["verdict"] = e.verdict ? ojson(to_string(*e.verdict)) : ojson(nullptr);
    j["accepted"] = e.accepted;
    j["note"] = e.note;
    return j;
}

IterationLogEntry log_from(json const& j)
{
    IterationLogEntry e;
    e.phase = phase_from_string(j.at("phase").get<std::string>());
    e.iteration = j.at("iteration").get<std::size_t>();
    if (!j["reviewer_confidence"].is_null())
        e.reviewer_confidence = j["reviewer_confidence"].get<double>();
    if (!j["verdict"].is_null())
        e.verdict = j["verdict"].get<std::string>() == "correct" ? Verdict::correct : Verdict::incorrect;
    e.accepted = j.at("accepted").get<bool>();
    e.note = j.value("note", "");
    return e;
}

} // namespace

char const* to_string(RunMethod method)
{
    switch (method)
    {
    case RunMethod::direct: return "direct";
    case RunMethod::system: return "system";
    case RunMethod::cot: return "cot";
    case RunMethod::pot_code: return "pot_code";
    case RunMethod::structchem: return "structchem";
    }
    return "?";
}

RunMethod run_method_from_string(std::string_view name)
{
    for (auto const m : all_run_methods)
        if (name == to_string(m))
            return m;
    throw ConfigError("unknown method '" + std::string(name) + "' (expected direct, system, cot, pot_code or structchem)");
}

Method baseline_template(RunMethod method)
{
    switch (method)
    {
    case RunMethod::direct: return Method::direct;
    case RunMethod::system: return Method::system;
    case RunMethod::cot: return Method::cot;
    case RunMethod::pot_code: return Method::pot_code;
    case RunMethod::structchem: break;
    }
    throw ConfigError("structchem is not a baseline method");
}

char const* to_string(Phase phase)
{
    return phase == Phase::formulae ? "formulae" : "reasoning";
}

Phase phase_from_string(std::string_view name)
{
    if (name == "formulae")
        return Phase::formulae;
    if (name == "reasoning")
        return Phase::reasoning;
    throw Error("unknown phase '" + std::string(name) + "'");
}

char const* to_string(FailurePhase phase)
{
    switch (phase)
    {
    case FailurePhase::generate: return "generate";
    case FailurePhase::parse_generation: return "parse_generation";
    case FailurePhase::review_formulae: return "review_formulae";
    case FailurePhase::review_reasoning: return "review_reasoning";
    case FailurePhase::finalize: return "finalize";
    case FailurePhase::extract_answer: return "extract_answer";
    case FailurePhase::sandbox: return "sandbox";
    }
    return "?";
}

FailurePhase failure_phase_from_string(std::string_view name)
{
    for (auto const p : all_failure_phases)
        if (name == to_string(p))
            return p;
    throw Error("unknown failure phase '" + std::string(name) + "'");
}

ojson to_json(FormulaSet const& f)
{
    ojson j;
    auto list = ojson::array();
    for (auto const& formula : f.formulae)
    {
        auto vars = ojson::array();
        for (auto const& v : formula.variables)
            vars.push_back({{"symbol", v.symbol}, {"explanation", v.explanation}});
        list.push_back({{"expression", formula.expression}, {"variables", std::move(vars)}});
    }
    j["formulae"] = std::move(list);
    j["confidence"] = f.confidence;
    return j;
}

ojson to_json(ReasoningTrace const& r)
{
    return {{"steps", r.steps}, {"confidence", r.confidence}};
}

FormulaSet formula_set_from_json(json const& j)
{
    FormulaSet f;
    for (auto const& item : j.at("formulae"))
    {
        Formula formula;
        formula.expression = item.at("expression").get<std::string>();
        for (auto const& v : item.at("variables"))
            formula.variables.push_back({v.at("symbol").get<std::string>(), v.at("explanation").get<std::string>()});
        f.formulae.push_back(std::move(formula));
    }
    f.confidence = j.at("confidence").get<double>();
    return f;
}

ReasoningTrace reasoning_trace_from_json(json const& j)
{
    return {j.at("steps").get<std::vector<std::string>>(), j.at("confidence").get<double>()};
}

ojson to_json(RunRecord const& r, bool include_timing)
{
    ojson j;
    j["problem_id"] = r.problem.id;
    j["dataset"] = r.problem.dataset_tag;
    j["method"] = to_string(r.method);
    j["mode"] = to_string(r.mode);
    j["status"] = r.failed() ? "failed" : "ok";
    j["failure_phase"] = r.failure_phase ? ojson(to_string(*r.failure_phase)) : ojson(nullptr);
    j["failure_message"] = r.failure_message;
    j["problem"] = problem_json(r.problem);

    auto exchanges = ojson::array();
    for (auto const& e : r.exchanges)
    {
        ojson x;
        x["phase"] = e.phase;
        x["iteration"] = e.iteration;
        x["role"] = to_string(e.role);
        x["model"] = e.model;
        x["prompt"] = prompt_json(e.prompt);
        x["completion"] = opt(e.completion);
        x["usage"] = usage_json(e.usage);
        exchanges.push_back(std::move(x));
    }
    j["backend_calls"] = r.exchanges.size();
    j["exchanges"] = std::move(exchanges);

    if (r.state)
    {
        ojson s;
        s["best_formulae"] = to_json(r.state->best_formulae);
        s["best_reasoning"] = to_json(r.state->best_reasoning);
        s["max_f"] = r.state->max_f;
        s["max_r"] = r.state->max_r;
        auto log = ojson::array();
        for (auto const& e : r.state->log)
            log.push_back(log_json(e));
        s["log"] = std::move(log);
        j["state"] = std::move(s);
    }
    else
    {
        j["state"] = nullptr;
    }

    if (r.final_answer)
        j["final_answer"] = {{"value", r.final_answer->value},
                             {"raw_sentence", r.final_answer->raw_sentence},
                             {"unit_text", opt(r.final_answer->unit_text)}};
    else
        j["final_answer"] = nullptr;
    j["program"] = opt(r.program);
    j["sandbox"] = r.sandbox ? to_json(*r.sandbox) : ojson(nullptr);
    j["grade"] = to_json(r.grade);
    j["warnings"] = r.warnings;

    if (include_timing)
    {
        ojson t;
        t["started_at"] = r.started_at;
        t["wall_clock_ms"] = r.wall_clock.count();
        auto latencies = ojson::array();
        for (auto const& e : r.exchanges)
            latencies.push_back(e.latency.count());
        t["latencies_ms"] = std::move(latencies);
        if (r.sandbox)
            t["sandbox_elapsed_s"] = r.sandbox->elapsed_seconds;
        j["timing"] = std::move(t);
    }
    return j;
}

RunRecord record_from_json(json const& j)
{
    try
    {
        RunRecord r;
        r.problem = problem_from(j.at("problem"));
        r.method = run_method_from_string(j.at("method").get<std::string>());
        r.mode = mode_from_string(j.at("mode").get<std::string>());
        if (!j["failure_phase"].is_null())
            r.failure_phase = failure_phase_from_string(j["failure_phase"].get<std::string>());
        r.failure_message = j.value("failure_message", "");

        auto const* timing = j.contains("timing") ? &j["timing"] : nullptr;
        std::size_t index = 0;
        for (auto const& x : j.at("exchanges"))
        {
            Exchange e;
            e.phase = x.at("phase").get<std::string>();
            e.iteration = x.at("iteration").get<std::size_t>();
            e.role = role_from_string(x.at("role").get<std::string>());
            e.model = x.value("model", "");
            e.prompt = prompt_from(x.at("prompt"), r.problem.id);
            if (!x["completion"].is_null())
                e.completion = x["completion"].get<std::string>();
            if (x.contains("usage") && !x["usage"].is_null())
                e.usage = Usage{x["usage"].value("prompt_tokens", 0L), x["usage"].value("completion_tokens", 0L),
                                x["usage"].value("total_tokens", 0L)};
            if (timing && timing->contains("latencies_ms") && index < (*timing)["latencies_ms"].size())
                e.latency = std::chrono::milliseconds((*timing)["latencies_ms"][index].get<long>());
            r.exchanges.push_back(std::move(e));
            ++index;
        }

        if (!j["state"].is_null())
        {
            auto const& s = j["state"];
            RefinementState state;
            state.best_formulae = formula_set_from_json(s.at("best_formulae"));
            state.best_reasoning = reasoning_trace_from_json(s.at("best_reasoning"));
            state.max_f = s.at("max_f").get<double>();
            state.max_r = s.at("max_r").get<double>();
            for (auto const& e : s.at("log"))
                state.log.push_back(log_from(e));
            r.state = std::move(state);
        }
        if (!j["final_answer"].is_null())
        {
            auto const& a = j["final_answer"];
            FinalAnswer fa;
            fa.value = a.at("value").get<double>();
            fa.raw_sentence = a.value("raw_sentence", "");
            if (!a["unit_text"].is_null())
                fa.unit_text = a["unit_text"].get<std::string>();
            r.final_answer = std::move(fa);
        }
        if (!j["program"].is_null())
            r.program = j["program"].get<std::string>();
        if (!j["sandbox"].is_null())
        {
            r.sandbox = parse_sandbox_record(j["sandbox"].dump());
            if (timing && timing->contains("sandbox_elapsed_s"))
                r.sandbox->elapsed_seconds = (*timing)["sandbox_elapsed_s"].get<double>();
        }
        r.grade = grade_from_json(j.at("grade"));
        r.warnings = j.value("warnings", std::vector<std::string>{});
        if (timing)
        {
            r.started_at = timing->value("started_at", "");
            r.wall_clock = std::chrono::milliseconds(timing->value("wall_clock_ms", 0L));
        }
        return r;
    }
    catch (json::exception const& e)
    {
        throw Error(std::string("malformed run record: ") + e.what());
    }
}

} // namespace structchem
