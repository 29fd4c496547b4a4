// SPDX-License-Identifier: Apache-2.0

#include "structchem/export.hpp"

#include "structchem/errors.hpp"
#include "structchem/harness.hpp"
#include "structchem/parse.hpp"

#include <array>
#include <charconv>

namespace structchem {

namespace {

std::string gold_text(Problem const& p)
{
    if (!p.gold_answer_text.empty())
        return p.gold_answer_text;
    std::array<char, 64> buf{};
    auto const [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), p.gold_answer);
    return std::string(buf.data(), end);
}

std::optional<std::string> cot_completion(RunRecord const& r)
{
    for (auto const& e : r.exchanges)
        if (e.phase == "baseline" && e.completion)
            return e.completion;
    return std::nullopt;
}

} // namespace

char const* to_string(FinetuneFormat format)
{
    switch (format)
    {
    case FinetuneFormat::original: return "original";
    case FinetuneFormat::cot_trace: return "cot_trace";
    case FinetuneFormat::structured_trace: return "structured_trace";
    }
    return "?";
}

FinetuneFormat finetune_format_from_string(std::string_view name)
{
    for (auto const f : {FinetuneFormat::original, FinetuneFormat::cot_trace, FinetuneFormat::structured_trace})
        if (name == to_string(f))
            return f;
    throw ConfigError("unknown corpus format '" + std::string(name) + "' (expected original, cot_trace or structured_trace)");
}

std::string answer_sentence(std::string const& answer)
{
    return std::string(answer_sentinel) + " " + answer + ".";
}

Corpus build_corpus(std::span<RunRecord const> records, FinetuneFormat format, bool only_correct, std::string source_run)
{
    Corpus corpus;
    corpus.format = format;
    corpus.only_correct = only_correct;
    corpus.source_run = std::move(source_run);

    for (auto const& r : records)
    {
        if (only_correct && !r.grade.correct)
            continue;

        FinetuneExample ex;
        ex.problem_id = r.problem.id;
        ex.format = format;
        ex.input_text = r.problem.statement;
        switch (format)
        {
        case FinetuneFormat::original:
            ex.target_text = answer_sentence(gold_text(r.problem));
            break;
        case FinetuneFormat::cot_trace: {
            auto const text = r.method == RunMethod::cot ? cot_completion(r) : std::nullopt;
            if (!text)
            {
                ++corpus.skipped;
                continue;
            }
            ex.target_text = *text;
            break;
        }
        case FinetuneFormat::structured_trace:
            if (!r.state || !r.final_answer)
            {
                ++corpus.skipped;
                continue;
            }
            ex.target_text = format_generation(r.state->best_formulae, r.state->best_reasoning) + r.final_answer->raw_sentence;
            break;
        }
        corpus.examples.push_back(std::move(ex));
    }

    if (corpus.skipped > 0)
        corpus.warnings.push_back(std::to_string(corpus.skipped) + " record(s) lack a " + to_string(format) + " trace");
    if (corpus.examples.empty())
        corpus.warnings.push_back("empty corpus after filtering");
    return corpus;
}

std::string render_corpus(Corpus const& corpus)
{
    nlohmann::ordered_json header;
    header["format"] = to_string(corpus.format);
    header["source_run"] = corpus.source_run;
    header["only_correct"] = corpus.only_correct;
    header["count"] = corpus.examples.size();
    header["skipped"] = corpus.skipped;

    std::string out = nlohmann::ordered_json{{"corpus", std::move(header)}}.dump() + "\n";
    for (auto const& ex : corpus.examples)
    {
        nlohmann::ordered_json line;
        line["problem_id"] = ex.problem_id;
        line["input"] = ex.input_text;
        line["target"] = ex.target_text;
        out += line.dump() + "\n";
    }
    return out;
}

Corpus export_finetune(std::span<RunRecord const> records, FinetuneFormat format, bool only_correct,
                       std::filesystem::path const& path, std::string source_run)
{
    auto corpus = build_corpus(records, format, only_correct, std::move(source_run));
    write_text_file(path, render_corpus(corpus));
    return corpus;
}

} // namespace structchem
