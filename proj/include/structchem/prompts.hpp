// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "structchem/dataset.hpp"
#include "structchem/parse.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace structchem {

enum class Method
{
    direct,
    system,
    cot,
    pot_code,
    struct_generate,
    struct_review_formulae,
    struct_review_reasoning,
    struct_finalize,
};

enum class SectionKind
{
    general_instruction,
    output_format,
    demonstrations,
    trigger,
};

enum class Mode
{
    zero_shot,
    few_shot,
};

enum class ChatRole
{
    system,
    user,
    assistant,
};

char const* to_string(Method method);
char const* to_string(SectionKind kind);
char const* to_string(Mode mode);
char const* to_string(ChatRole role);
Method method_from_string(std::string_view name);
Mode mode_from_string(std::string_view name);

inline constexpr std::array<SectionKind, 4> all_section_kinds{
    SectionKind::general_instruction,
    SectionKind::output_format,
    SectionKind::demonstrations,
    SectionKind::trigger,
};

struct PromptTemplate
{
    Method method = Method::direct;
    /// Always in general_instruction, output_format, demonstrations, trigger order.
    std::vector<std::pair<SectionKind, std::string>> sections;
    /// Layout of one demonstration inside {{demos}}.
    std::string demo_item;

    [[nodiscard]] std::string const& section(SectionKind kind) const;
};

struct ChatMessage
{
    ChatRole role = ChatRole::user;
    std::string text;

    bool operator==(ChatMessage const&) const = default;
};

struct RenderedPrompt
{
    std::vector<ChatMessage> messages;
    Method method = Method::direct;
    std::string problem_id;

    /// Stable hash of the message list; the scripted oracle keys on it.
    [[nodiscard]] std::string fingerprint() const;
    [[nodiscard]] std::size_t total_chars() const;

    bool operator==(RenderedPrompt const&) const = default;
};

/// The full set of method templates. Immutable once built.
class TemplateLibrary
{
public:
    /// Templates compiled in from the repository's templates/ directory.
    static TemplateLibrary const& builtin();

    /// Loads <dir>/<method>/<section>.txt. A missing section file is an
    /// empty section; a missing method directory is an error.
    static TemplateLibrary load(std::filesystem::path const& dir);

    /// From (relative path "method/file.txt", contents) pairs.
    static TemplateLibrary from_files(std::map<std::string, std::string> const& files);

    [[nodiscard]] PromptTemplate const& get(Method method) const;

    /// Hash over every template text; recorded in run manifests.
    [[nodiscard]] std::string version() const;

private:
    std::map<Method, PromptTemplate> templates_;
};

/// Substitutes {{name}} placeholders. Lines whose placeholders all expand to
/// empty strings are removed. Unknown placeholders throw TemplateError.
std::string substitute(std::string_view text, std::map<std::string, std::string> const& values);

/// Deterministic recast of a worked solution into the block format:
/// solution lines (or sentences) become steps and the ones containing '='
/// become formulae. Both confidences are 1.
std::pair<FormulaSet, ReasoningTrace> recast_solution(Problem const& problem);

class PromptRenderer
{
public:
    explicit PromptRenderer(TemplateLibrary const& library = TemplateLibrary::builtin())
        : library_(&library)
    {
    }

    /// direct / system / cot / pot_code. Demonstrations must be given exactly
    /// in few-shot mode.
    [[nodiscard]] RenderedPrompt render_baseline(Method method, Problem const& problem, Mode mode,
                                                 DemoSet const* demos = nullptr) const;

    [[nodiscard]] RenderedPrompt render_struct_generate(Problem const& problem, Mode mode,
                                                        DemoSet const* demos = nullptr) const;

    /// kind is struct_review_formulae or struct_review_reasoning. The reasoning
    /// review needs the prior trace as well as the accepted formulae.
    [[nodiscard]] RenderedPrompt render_struct_review(Method kind, Problem const& problem, FormulaSet const& formulae,
                                                      ReasoningTrace const* reasoning) const;

    [[nodiscard]] RenderedPrompt render_struct_finalize(Problem const& problem, FormulaSet const& formulae,
                                                        ReasoningTrace const& reasoning) const;

    [[nodiscard]] TemplateLibrary const& library() const { return *library_; }

private:
    RenderedPrompt render(Method method, Problem const& problem, std::map<std::string, std::string> values) const;
    std::string render_demos(Method method, DemoSet const& demos) const;

    TemplateLibrary const* library_;
};

} // namespace structchem
