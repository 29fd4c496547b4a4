// SPDX-License-Identifier: Apache-2.0

#include "structchem/prompts.hpp"

#include "structchem/errors.hpp"
#include "text_util.hpp"

#include <fstream>
#include <regex>
#include <sstream>

namespace structchem {

namespace detail {
// Generated at build time from templates/.
std::map<std::string, std::string> const& embedded_template_files();
} // namespace detail

namespace {

constexpr std::array<Method, 8> all_methods{
    Method::direct,
    Method::system,
    Method::cot,
    Method::pot_code,
    Method::struct_generate,
    Method::struct_review_formulae,
    Method::struct_review_reasoning,
    Method::struct_finalize,
};

std::string const empty_string;

std::string trim_trailing(std::string s)
{
    while (!s.empty() && detail::is_space(s.back()))
        s.pop_back();
    while (!s.empty() && (s.front() == '\n' || s.front() == '\r'))
        s.erase(s.begin());
    return s;
}

std::string join_sections(std::initializer_list<std::string> parts)
{
    std::string out;
    for (auto const& part : parts)
    {
        if (part.empty())
            continue;
        if (!out.empty())
            out += "\n\n";
        out += part;
    }
    return out;
}

bool is_struct(Method m)
{
    return m == Method::struct_generate || m == Method::struct_review_formulae || m == Method::struct_review_reasoning ||
           m == Method::struct_finalize;
}

void check_demos(Mode mode, DemoSet const* demos)
{
    bool const have = demos != nullptr && !demos->empty();
    if (mode == Mode::zero_shot && have)
        throw PromptError("demonstrations given in zero-shot mode");
    if (mode == Mode::few_shot && !have)
        throw PromptError("few-shot mode requires demonstrations");
}

std::vector<std::string> solution_units(std::string const& solution)
{
    std::vector<std::string> lines;
    for (auto line : detail::split_lines(solution))
    {
        line = detail::trim(line);
        if (!line.empty())
            lines.emplace_back(line);
    }
    if (lines.size() != 1)
        return lines;

    // Single paragraph: split into sentences at ". " followed by an uppercase letter.
    std::vector<std::string> sentences;
    auto const& text = lines.front();
    std::size_t start = 0;
    for (std::size_t i = 0; i + 2 < text.size(); ++i)
    {
        if (text[i] != '.' || !detail::is_space(text[i + 1]))
            continue;
        std::size_t j = i + 1;
        while (j < text.size() && detail::is_space(text[j]))
            ++j;
        if (j < text.size() && std::isupper(static_cast<unsigned char>(text[j])))
        {
            sentences.emplace_back(detail::trim(std::string_view(text).substr(start, i + 1 - start)));
            start = j;
        }
    }
    sentences.emplace_back(detail::trim(std::string_view(text).substr(start)));
    std::erase_if(sentences, [](std::string const& s) { return s.empty(); });
    return sentences;
}

} // namespace

char const* to_string(Method method)
{
    switch (method)
    {
    case Method::direct: return "direct";
    case Method::system: return "system";
    case Method::cot: return "cot";
    case Method::pot_code: return "pot_code";
    case Method::struct_generate: return "struct_generate";
    case Method::struct_review_formulae: return "struct_review_formulae";
    case Method::struct_review_reasoning: return "struct_review_reasoning";
    case Method::struct_finalize: return "struct_finalize";
    }
    return "?";
}

char const* to_string(SectionKind kind)
{
    switch (kind)
    {
    case SectionKind::general_instruction: return "general_instruction";
    case SectionKind::output_format: return "output_format";
    case SectionKind::demonstrations: return "demonstrations";
    case SectionKind::trigger: return "trigger";
    }
    return "?";
}

char const* to_string(Mode mode)
{
    return mode == Mode::zero_shot ? "zero_shot" : "few_shot";
}

char const* to_string(ChatRole role)
{
    switch (role)
    {
    case ChatRole::system: return "system";
    case ChatRole::user: return "user";
    case ChatRole::assistant: return "assistant";
    }
    return "?";
}

Method method_from_string(std::string_view name)
{
    for (auto const m : all_methods)
        if (name == to_string(m))
            return m;
    throw ConfigError("unknown prompt method '" + std::string(name) + "'");
}

Mode mode_from_string(std::string_view name)
{
    if (name == "zero_shot")
        return Mode::zero_shot;
    if (name == "few_shot")
        return Mode::few_shot;
    throw ConfigError("unknown mode '" + std::string(name) + "' (expected zero_shot or few_shot)");
}

std::string const& PromptTemplate::section(SectionKind kind) const
{
    for (auto const& [k, text] : sections)
        if (k == kind)
            return text;
    return empty_string;
}

std::string RenderedPrompt::fingerprint() const
{
    auto hash = detail::fnv1a("");
    for (auto const& m : messages)
    {
        hash = detail::fnv1a(to_string(m.role), hash);
        hash = detail::fnv1a("\x1f", hash);
        hash = detail::fnv1a(m.text, hash);
        hash = detail::fnv1a("\x1e", hash);
    }
    return detail::to_hex(hash);
}

std::size_t RenderedPrompt::total_chars() const
{
    std::size_t n = 0;
    for (auto const& m : messages)
        n += m.text.size();
    return n;
}

TemplateLibrary const& TemplateLibrary::builtin()
{
    static TemplateLibrary const library = from_files(detail::embedded_template_files());
    return library;
}

TemplateLibrary TemplateLibrary::from_files(std::map<std::string, std::string> const& files)
{
    TemplateLibrary lib;
    for (auto const method : all_methods)
    {
        std::string const prefix = std::string(to_string(method)) + "/";
        bool any = false;
        PromptTemplate t;
        t.method = method;
        for (auto const kind : all_section_kinds)
        {
            auto const it = files.find(prefix + to_string(kind) + ".txt");
            any = any || it != files.end();
            t.sections.emplace_back(kind, it == files.end() ? std::string{} : trim_trailing(it->second));
        }
        if (auto const it = files.find(prefix + "demo_item.txt"); it != files.end())
        {
            t.demo_item = trim_trailing(it->second);
            any = true;
        }
        if (!any)
            throw TemplateError(std::string("no template files for method '") + to_string(method) + "'");
        lib.templates_.emplace(method, std::move(t));
    }
    return lib;
}

TemplateLibrary TemplateLibrary::load(std::filesystem::path const& dir)
{
    std::map<std::string, std::string> files;
    for (auto const method : all_methods)
    {
        auto const method_dir = dir / to_string(method);
        if (!std::filesystem::is_directory(method_dir))
            throw TemplateError("template directory " + method_dir.string() + " does not exist");
        for (auto const& entry : std::filesystem::directory_iterator(method_dir))
        {
            if (!entry.is_regular_file() || entry.path().extension() != ".txt")
                continue;
            std::ifstream in(entry.path(), std::ios::binary);
            std::ostringstream buffer;
            buffer << in.rdbuf();
            files[std::string(to_string(method)) + "/" + entry.path().filename().string()] = buffer.str();
        }
    }
    return from_files(files);
}

PromptTemplate const& TemplateLibrary::get(Method method) const
{
    return templates_.at(method);
}

std::string TemplateLibrary::version() const
{
    auto hash = detail::fnv1a("");
    for (auto const& [method, t] : templates_)
    {
        hash = detail::fnv1a(to_string(method), hash);
        for (auto const& [kind, text] : t.sections)
        {
            hash = detail::fnv1a(to_string(kind), hash);
            hash = detail::fnv1a(text, hash);
        }
        hash = detail::fnv1a(t.demo_item, hash);
    }
    return detail::to_hex(hash);
}

std::string substitute(std::string_view text, std::map<std::string, std::string> const& values)
{
    std::vector<std::string> kept;
    for (auto const line : detail::split_lines(text))
    {
        std::string rendered;
        bool has_placeholder = false;
        bool any_nonempty = false;
        std::size_t pos = 0;
        while (true)
        {
            auto const open = line.find("{{", pos);
            if (open == std::string_view::npos)
            {
                rendered.append(line.substr(pos));
                break;
            }
            auto const close = line.find("}}", open + 2);
            if (close == std::string_view::npos)
                throw TemplateError("unterminated placeholder in line: " + std::string(line));
            auto const name = std::string(detail::trim(line.substr(open + 2, close - open - 2)));
            auto const it = values.find(name);
            if (it == values.end())
                throw TemplateError("unknown placeholder {{" + name + "}}");
            rendered.append(line.substr(pos, open - pos));
            rendered.append(it->second);
            has_placeholder = true;
            any_nonempty = any_nonempty || !it->second.empty();
            pos = close + 2;
        }
        if (has_placeholder && !any_nonempty)
            continue;
        kept.push_back(std::move(rendered));
    }
    std::string out;
    for (std::size_t i = 0; i < kept.size(); ++i)
        out += (i == 0 ? "" : "\n") + kept[i];
    return out;
}

std::pair<FormulaSet, ReasoningTrace> recast_solution(Problem const& problem)
{
    static std::regex const numbering(R"(^(?:\[\s*step\s*\d+\s*\]|step\s*\d+\s*[:.)]|\d+[.)](?=\s))\s*)", std::regex::icase);

    FormulaSet formulae;
    ReasoningTrace reasoning;
    formulae.confidence = 1.0;
    reasoning.confidence = 1.0;

    for (auto unit : solution_units(problem.solution.value_or("")))
    {
        unit = std::string(detail::trim(std::regex_replace(unit, numbering, "", std::regex_constants::format_first_only)));
        if (unit.empty())
            continue;
        reasoning.steps.push_back(unit);
        if (unit.find('=') != std::string::npos)
        {
            bool const seen = std::any_of(formulae.formulae.begin(), formulae.formulae.end(),
                                          [&](Formula const& f) { return f.expression == unit; });
            if (!seen)
                formulae.formulae.push_back({unit, {}});
        }
    }
    if (reasoning.steps.empty())
        reasoning.steps.push_back("The answer is therefore " + problem.gold_answer_text + ".");
    if (formulae.formulae.empty())
        formulae.formulae.push_back({reasoning.steps.front(), {}});
    return {std::move(formulae), std::move(reasoning)};
}

std::string PromptRenderer::render_demos(Method method, DemoSet const& demos) const
{
    auto const& item = library_->get(method).demo_item;
    std::string out;
    for (std::size_t i = 0; i < demos.demos.size(); ++i)
    {
        auto const& d = demos.demos[i];
        std::map<std::string, std::string> values{
            {"demo_index", std::to_string(i + 1)},
            {"demo_problem", d.statement},
            {"demo_unit", d.unit},
            {"demo_solution", d.solution.value_or("")},
            {"demo_answer", d.gold_answer_text},
            {"demo_blocks", ""},
        };
        if (method == Method::struct_generate)
        {
            auto const [f, r] = recast_solution(d);
            values["demo_blocks"] = trim_trailing(format_generation(f, r));
        }
        if (!out.empty())
            out += "\n\n";
        out += substitute(item, values);
    }
    return out;
}

RenderedPrompt PromptRenderer::render(Method method, Problem const& problem, std::map<std::string, std::string> values) const
{
    values.emplace("problem", problem.statement);
    values.emplace("unit", problem.unit);
    values.emplace("demos", "");
    values.emplace("formulae", "");
    values.emplace("reasoning", "");

    auto const& t = library_->get(method);
    auto section = [&](SectionKind kind) { return trim_trailing(substitute(t.section(kind), values)); };

    RenderedPrompt prompt;
    prompt.method = method;
    prompt.problem_id = problem.id;

    // Without demonstrations the whole section goes, header text included.
    auto demonstrations = values.at("demos").empty() ? std::string{} : section(SectionKind::demonstrations);
    auto system_text = join_sections({section(SectionKind::general_instruction), section(SectionKind::output_format)});
    auto user_text = join_sections({std::move(demonstrations), section(SectionKind::trigger)});
    if (user_text.empty())
        throw TemplateError(std::string("template for '") + to_string(method) + "' renders an empty user message");
    if (!system_text.empty())
        prompt.messages.push_back({ChatRole::system, std::move(system_text)});
    prompt.messages.push_back({ChatRole::user, std::move(user_text)});
    return prompt;
}

RenderedPrompt PromptRenderer::render_baseline(Method method, Problem const& problem, Mode mode, DemoSet const* demos) const
{
    if (is_struct(method))
        throw PromptError(std::string("'") + to_string(method) + "' is not a baseline method");
    check_demos(mode, demos);
    std::map<std::string, std::string> values;
    if (mode == Mode::few_shot)
        values["demos"] = render_demos(method, *demos);
    return render(method, problem, std::move(values));
}

RenderedPrompt PromptRenderer::render_struct_generate(Problem const& problem, Mode mode, DemoSet const* demos) const
{
    check_demos(mode, demos);
    std::map<std::string, std::string> values;
    if (mode == Mode::few_shot)
        values["demos"] = render_demos(Method::struct_generate, *demos);
    return render(Method::struct_generate, problem, std::move(values));
}

RenderedPrompt PromptRenderer::render_struct_review(Method kind, Problem const& problem, FormulaSet const& formulae,
                                                    ReasoningTrace const* reasoning) const
{
    if (kind != Method::struct_review_formulae && kind != Method::struct_review_reasoning)
        throw PromptError(std::string("'") + to_string(kind) + "' is not a review method");
    if (formulae.formulae.empty())
        throw PromptError("review prompt needs a non-empty formula set");

    std::map<std::string, std::string> values{{"formulae", trim_trailing(format_formulae_body(formulae))}};
    if (kind == Method::struct_review_reasoning)
    {
        if (reasoning == nullptr || reasoning->steps.empty())
            throw PromptError("reasoning review needs the prior reasoning trace");
        values["reasoning"] = trim_trailing(format_reasoning_body(*reasoning));
    }
    return render(kind, problem, std::move(values));
}

RenderedPrompt PromptRenderer::render_struct_finalize(Problem const& problem, FormulaSet const& formulae,
                                                      ReasoningTrace const& reasoning) const
{
    return render(Method::struct_finalize, problem,
                  {{"formulae", trim_trailing(format_formulae_body(formulae))},
                   {"reasoning", trim_trailing(format_reasoning_body(reasoning))}});
}

} // namespace structchem
