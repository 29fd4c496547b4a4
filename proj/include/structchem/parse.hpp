// SPDX-License-Identifier: Apache-2.0

// Typed views of model completions and the labeled-block grammar they follow.
// The grammar is documented in docs/block_format.md; the struct_* prompt
// templates quote the same layout.

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace structchem {

struct VariableExplanation
{
    std::string symbol;
    std::string explanation;

    bool operator==(VariableExplanation const&) const = default;
};

struct Formula
{
    std::string expression;
    std::vector<VariableExplanation> variables;

    bool operator==(Formula const&) const = default;
};

struct FormulaSet
{
    std::vector<Formula> formulae;
    double confidence = 0.0;

    bool operator==(FormulaSet const&) const = default;
};

struct ReasoningTrace
{
    std::vector<std::string> steps;
    double confidence = 0.0;

    bool operator==(ReasoningTrace const&) const = default;
};

enum class Verdict
{
    correct,
    incorrect,
};

using ReviewedContent = std::variant<FormulaSet, ReasoningTrace>;

struct ReviewOutcome
{
    Verdict verdict = Verdict::correct;
    ReviewedContent revised;
    double confidence = 0.0;
    std::vector<std::string> warnings;
};

struct GenerationParse
{
    FormulaSet formulae;
    ReasoningTrace reasoning;
    std::vector<std::string> warnings;
};

struct FinalAnswer
{
    double value = 0.0;
    /// Text from the sentinel phrase to the end of its sentence.
    std::string raw_sentence;
    std::optional<std::string> unit_text;
};

// Block labels. Shared with the prompt templates.
inline constexpr std::string_view formulae_label = "FORMULAE:";
inline constexpr std::string_view reasoning_label = "REASONING:";
inline constexpr std::string_view confidence_formulae_label = "CONFIDENCE_FORMULAE:";
inline constexpr std::string_view confidence_reasoning_label = "CONFIDENCE_REASONING:";
inline constexpr std::string_view verdict_label = "VERDICT:";
inline constexpr std::string_view revised_formulae_label = "REVISED_FORMULAE:";
inline constexpr std::string_view revised_reasoning_label = "REVISED_REASONING:";
inline constexpr std::string_view confidence_label = "CONFIDENCE:";
inline constexpr std::string_view answer_sentinel = "The answer is therefore";

/// Renders a confidence with up to 6 significant decimals and no trailing zeros.
std::string format_confidence(double confidence);

/// "[Formula k] expr" lines with "  - symbol: explanation" underneath. No label line.
std::string format_formulae_body(FormulaSet const& formulae);
/// "[Step k] text" lines. No label line.
std::string format_reasoning_body(ReasoningTrace const& reasoning);

/// FORMULAE / CONFIDENCE_FORMULAE / REASONING / CONFIDENCE_REASONING blocks.
std::string format_generation(FormulaSet const& formulae, ReasoningTrace const& reasoning);

/// VERDICT / REVISED_* / CONFIDENCE blocks, as a reviewer is asked to reply.
std::string format_review(Verdict verdict, ReviewedContent const& revised, double confidence);

/// Extracts both labeled blocks and their confidences. Missing confidences
/// default to 0 and out-of-range ones are clamped; both add a warning.
GenerationParse parse_generation(std::string_view text);

/// Parses a reviewer reply against the content it reviewed. A `correct`
/// verdict always yields the reviewed content unchanged.
ReviewOutcome parse_review(std::string_view text, ReviewedContent const& reviewed);

/// Value after the last "The answer is therefore" (case-insensitive).
/// Accepts 2.450, 1.312e-20, 1.312×10^-20, $1.312\times10^{-20}$ and 10⁻²⁰ forms.
FinalAnswer extract_final_answer(std::string_view text);

/// Contents of the last ``` fenced block, without the language tag line.
std::string parse_code_block(std::string_view text);

/// Whitespace-collapsed text form used to compare contents.
std::string normalized_text(ReviewedContent const& content);

char const* to_string(Verdict verdict);

} // namespace structchem
