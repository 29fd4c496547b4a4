// SPDX-License-Identifier: Apache-2.0

// Fine-tuning corpora built from run records. Output is JSON Lines: a header
// object {"corpus": {...}} describing the source run and filters, then one
// {"problem_id", "input", "target"} object per example.

#pragma once

#include "structchem/run_record.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace structchem {

enum class FinetuneFormat
{
    /// problem -> "The answer is therefore <gold>."
    original,
    /// problem -> the chain-of-thought completion of a cot run
    cot_trace,
    /// problem -> accepted formulae and reasoning blocks + answer sentence
    structured_trace,
};

char const* to_string(FinetuneFormat format);
FinetuneFormat finetune_format_from_string(std::string_view name);

struct FinetuneExample
{
    std::string problem_id;
    std::string input_text;
    std::string target_text;
    FinetuneFormat format = FinetuneFormat::original;
};

struct Corpus
{
    FinetuneFormat format = FinetuneFormat::original;
    bool only_correct = false;
    std::string source_run;
    std::vector<FinetuneExample> examples;
    /// Records left out because they lacked what the format needs.
    std::size_t skipped = 0;
    std::vector<std::string> warnings;
};

/// "The answer is therefore <answer>."
std::string answer_sentence(std::string const& answer);

/// Records are taken in the given order. Never throws on an empty result;
/// an empty corpus carries a warning instead.
Corpus build_corpus(std::span<RunRecord const> records, FinetuneFormat format, bool only_correct,
                    std::string source_run = {});

/// Header line plus one line per example; deterministic for equal input.
std::string render_corpus(Corpus const& corpus);

/// build_corpus + render_corpus, written to `path`.
Corpus export_finetune(std::span<RunRecord const> records, FinetuneFormat format, bool only_correct,
                       std::filesystem::path const& path, std::string source_run = {});

} // namespace structchem
