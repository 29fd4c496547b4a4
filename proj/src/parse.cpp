// SPDX-License-Identifier: Apache-2.0

#include "structchem/parse.hpp"

#include "structchem/errors.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <regex>

namespace structchem {

namespace {

enum class Label
{
    none,
    formulae,
    reasoning,
    confidence_formulae,
    confidence_reasoning,
    verdict,
    revised_formulae,
    revised_reasoning,
    confidence,
};

// Longest labels first so that prefixes never shadow each other.
constexpr std::array<std::pair<std::string_view, Label>, 8> label_table{{
    {confidence_formulae_label, Label::confidence_formulae},
    {confidence_reasoning_label, Label::confidence_reasoning},
    {revised_formulae_label, Label::revised_formulae},
    {revised_reasoning_label, Label::revised_reasoning},
    {confidence_label, Label::confidence},
    {formulae_label, Label::formulae},
    {reasoning_label, Label::reasoning},
    {verdict_label, Label::verdict},
}};

bool label_char_equal(char a, char b)
{
    auto fold = [](char c) {
        if (c == ' ')
            return '_';
        return static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    };
    return fold(a) == fold(b);
}

std::string_view strip_decoration(std::string_view s)
{
    s = detail::trim(s);
    while (!s.empty() && (s.front() == '*' || s.front() == '#' || s.front() == '`' || s.front() == '>' || s.front() == '_'))
    {
        s.remove_prefix(1);
        s = detail::trim(s);
    }
    while (!s.empty() && (s.back() == '*' || s.back() == '`'))
    {
        s.remove_suffix(1);
        s = detail::trim(s);
    }
    return s;
}

/// Returns the label on this line and the text after it, if any.
std::pair<Label, std::string_view> match_label(std::string_view line)
{
    auto const s = strip_decoration(line);
    for (auto const& [label, kind] : label_table)
    {
        if (s.size() < label.size())
            continue;
        // Allow "**FORMULAE**:" style by dropping '*' between name and colon.
        std::size_t i = 0;
        std::size_t j = 0;
        while (i < label.size() && j < s.size())
        {
            if (label[i] == ':' && s[j] == '*')
            {
                ++j;
                continue;
            }
            if (!label_char_equal(label[i], s[j]))
                break;
            ++i;
            ++j;
        }
        if (i == label.size())
            return {kind, strip_decoration(s.substr(j))};
    }
    return {Label::none, {}};
}

struct Block
{
    Label label = Label::none;
    std::vector<std::string_view> lines;
};

std::vector<Block> segment(std::string_view text)
{
    std::vector<Block> blocks;
    for (auto const line : detail::split_lines(text))
    {
        auto const [label, rest] = match_label(line);
        if (label != Label::none)
        {
            Block b;
            b.label = label;
            if (!detail::trim(rest).empty())
                b.lines.push_back(rest);
            blocks.push_back(std::move(b));
            continue;
        }
        if (!blocks.empty())
            blocks.back().lines.push_back(line);
    }
    return blocks;
}

Block const* find_block(std::vector<Block> const& blocks, std::initializer_list<Label> labels)
{
    for (auto const label : labels)
        for (auto const& b : blocks)
            if (b.label == label)
                return &b;
    return nullptr;
}

std::string excerpt(std::string_view text)
{
    constexpr std::size_t limit = 200;
    if (text.size() <= limit)
        return std::string(text);
    return std::string(text.substr(0, limit)) + "...";
}

std::optional<double> read_score(std::string_view raw)
{
    auto s = strip_decoration(raw);
    std::size_t n = 0;
    while (n < s.size() && (std::isdigit(static_cast<unsigned char>(s[n])) || s[n] == '.' || s[n] == '-' || s[n] == '+' ||
                            s[n] == 'e' || s[n] == 'E'))
        ++n;
    auto value = detail::parse_double(s.substr(0, n));
    if (!value)
        return std::nullopt;
    if (n < s.size() && detail::trim(s.substr(n)).starts_with('%'))
        *value /= 100.0;
    return value;
}

/// Score from a block's first line; missing/unreadable gives nullopt.
std::optional<double> block_score(Block const* block)
{
    if (block == nullptr)
        return std::nullopt;
    for (auto const line : block->lines)
        if (!detail::trim(line).empty())
            return read_score(line);
    return std::nullopt;
}

double clamp_score(double value, std::string_view what, std::vector<std::string>& warnings)
{
    if (value < 0.0 || value > 1.0)
    {
        auto const clamped = std::clamp(value, 0.0, 1.0);
        warnings.push_back(std::string(what) + " " + format_confidence(value) + " clamped to " + format_confidence(clamped));
        return clamped;
    }
    return value;
}

std::regex const& formula_marker()
{
    static std::regex const re(R"(^\[\s*formula\s*\d+\s*\]\s*(.*)$)", std::regex::icase);
    return re;
}

std::regex const& step_marker()
{
    static std::regex const re(R"(^(?:\[\s*step\s*\d+\s*\]|step\s*\d+\s*[:.)]|\d+[.)](?=\s|$))\s*(.*)$)", std::regex::icase);
    return re;
}

std::regex const& loose_formula_numbering()
{
    static std::regex const re(R"(^(?:formula\s*\d+\s*[:.)]|\d+[.)](?=\s|$))\s*(.*)$)", std::regex::icase);
    return re;
}

bool is_bullet(std::string_view line)
{
    return !line.empty() && (line.front() == '-' || line.front() == '*' || line.starts_with("\xE2\x80\xA2"));
}

VariableExplanation parse_explanation(std::string_view line)
{
    line.remove_prefix(line.starts_with("\xE2\x80\xA2") ? 3 : 1);
    line = detail::trim(line);
    auto const colon = line.find(':');
    if (colon == std::string_view::npos)
        return {"", std::string(line)};
    return {std::string(detail::trim(line.substr(0, colon))), std::string(detail::trim(line.substr(colon + 1)))};
}

std::vector<Formula> parse_formulae_lines(std::vector<std::string_view> const& lines, std::vector<std::string>& warnings)
{
    bool const has_markers = std::any_of(lines.begin(), lines.end(), [](std::string_view l) {
        auto const t = std::string(detail::trim(l));
        return std::regex_match(t, formula_marker());
    });

    std::vector<Formula> formulae;
    std::smatch m;
    for (auto const raw : lines)
    {
        auto const line = std::string(detail::trim(raw));
        if (line.empty())
            continue;
        if (std::regex_match(line, m, formula_marker()))
        {
            formulae.push_back({std::string(detail::trim(m[1].str())), {}});
        }
        else if (is_bullet(line))
        {
            if (formulae.empty())
            {
                warnings.push_back("variable explanation before any formula ignored: " + excerpt(line));
                continue;
            }
            formulae.back().variables.push_back(parse_explanation(line));
        }
        else if (has_markers)
        {
            if (formulae.empty())
                formulae.push_back({line, {}});
            else
            {
                auto& expr = formulae.back().expression;
                expr = expr.empty() ? line : expr + " " + line;
            }
        }
        else if (std::regex_match(line, m, loose_formula_numbering()))
        {
            formulae.push_back({std::string(detail::trim(m[1].str())), {}});
        }
        else
        {
            formulae.push_back({line, {}});
        }
    }
    return formulae;
}

std::vector<std::string> parse_step_lines(std::vector<std::string_view> const& lines)
{
    std::vector<std::string> steps;
    bool open = false;
    std::smatch m;
    for (auto const raw : lines)
    {
        auto const line = std::string(detail::trim(raw));
        if (line.empty())
            continue;
        if (std::regex_match(line, m, step_marker()))
        {
            steps.push_back(std::string(detail::trim(m[1].str())));
            open = true;
        }
        else if (open)
        {
            auto& step = steps.back();
            step = step.empty() ? line : step + "\n" + line;
        }
        else
        {
            steps.push_back(line);
            open = true;
        }
    }
    std::erase_if(steps, [](std::string const& s) { return s.empty(); });
    return steps;
}

// --- final answer -------------------------------------------------------

constexpr std::string_view utf8_times = "\xC3\x97";
constexpr std::string_view utf8_middle_dot = "\xC2\xB7";
constexpr std::string_view utf8_minus = "\xE2\x88\x92";
constexpr std::string_view utf8_approx = "\xE2\x89\x88";
constexpr std::string_view utf8_sup_minus = "\xE2\x81\xBB";
constexpr std::string_view utf8_sup_plus = "\xE2\x81\xBA";

bool consume(std::string_view& s, std::string_view token)
{
    if (detail::starts_with_ci(s, token))
    {
        s.remove_prefix(token.size());
        return true;
    }
    return false;
}

void skip_spaces(std::string_view& s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (consume(s, "\\,") || consume(s, "\\;") || consume(s, "\\ ") || consume(s, "~"))
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
            s.remove_prefix(1);
}

bool consume_sign(std::string_view& s, bool& negative)
{
    negative = false;
    if (consume(s, "-") || consume(s, utf8_minus))
    {
        negative = true;
        return true;
    }
    return consume(s, "+");
}

std::string take_digits(std::string_view& s)
{
    std::string out;
    while (!s.empty() && std::isdigit(static_cast<unsigned char>(s.front())))
    {
        out.push_back(s.front());
        s.remove_prefix(1);
    }
    return out;
}

/// Superscript digit at the front of s (UTF-8), or -1.
int superscript_digit(std::string_view s)
{
    if (s.starts_with("\xE2\x81\xB0"))
        return 0;
    if (s.starts_with("\xC2\xB9"))
        return 1;
    if (s.starts_with("\xC2\xB2"))
        return 2;
    if (s.starts_with("\xC2\xB3"))
        return 3;
    if (s.size() >= 3 && s[0] == '\xE2' && s[1] == '\x81')
    {
        auto const c = static_cast<unsigned char>(s[2]);
        if (c >= 0xB4 && c <= 0xB9)
            return c - 0xB0;
    }
    return -1;
}

/// Parses the "×10^-20" tail. On success s is advanced and the exponent returned.
std::optional<long> parse_power_of_ten(std::string_view& s)
{
    auto t = s;
    skip_spaces(t);
    if (!(consume(t, utf8_times) || consume(t, utf8_middle_dot) || consume(t, "\\times") || consume(t, "\\cdot") ||
          consume(t, "x") || consume(t, "*")))
        return std::nullopt;
    skip_spaces(t);
    consume(t, "{");
    if (!consume(t, "10"))
        return std::nullopt;
    consume(t, "}");

    long exponent = 1;
    if (superscript_digit(t) >= 0 || t.starts_with(utf8_sup_minus) || t.starts_with(utf8_sup_plus))
    {
        bool negative = consume(t, utf8_sup_minus);
        if (!negative)
            consume(t, utf8_sup_plus);
        long value = 0;
        bool any = false;
        for (int d = superscript_digit(t); d >= 0; d = superscript_digit(t))
        {
            value = value * 10 + d;
            t.remove_prefix(t.starts_with("\xE2") ? 3 : 2);
            any = true;
        }
        if (!any)
            return std::nullopt;
        exponent = negative ? -value : value;
    }
    else if (consume(t, "^") || consume(t, "**"))
    {
        skip_spaces(t);
        bool const braced = consume(t, "{") || consume(t, "(");
        skip_spaces(t);
        bool negative = false;
        consume_sign(t, negative);
        auto const digits = take_digits(t);
        if (digits.empty())
            return std::nullopt;
        skip_spaces(t);
        if (braced && !(consume(t, "}") || consume(t, ")")))
            return std::nullopt;
        exponent = std::stol(digits) * (negative ? -1 : 1);
    }
    s = t;
    return exponent;
}

void skip_answer_prefix(std::string_view& s)
{
    bool progressed = true;
    while (progressed && !s.empty())
    {
        progressed = false;
        auto const before = s.size();
        while (!s.empty() && (detail::is_space(s.front()) || s.front() == ':' || s.front() == '=' || s.front() == '$' ||
                              s.front() == '*' || s.front() == '[' || s.front() == '{' || s.front() == '('))
            s.remove_prefix(1);
        consume(s, "\\(") || consume(s, "\\[") || consume(s, "\\boxed{") || consume(s, "\\mathbf{") ||
            consume(s, "approximately") || consume(s, "about") || consume(s, "roughly") || consume(s, utf8_approx) ||
            consume(s, "\\approx") || consume(s, "~") || consume(s, "is ");
        progressed = s.size() != before;
    }
}

std::optional<std::string> clean_unit(std::string_view rest)
{
    auto const newline = rest.find('\n');
    if (newline != std::string_view::npos)
        rest = rest.substr(0, newline);

    std::string unit;
    for (auto s = rest; !s.empty();)
    {
        if (consume(s, "\\text{") || consume(s, "\\mathrm{") || consume(s, "\\,") || consume(s, "\\ ") ||
            consume(s, "\\)") || consume(s, "\\]"))
            continue;
        char const c = s.front();
        s.remove_prefix(1);
        if (c == '$' || c == '{' || c == '}' || c == '*')
            continue;
        unit.push_back(c);
    }

    std::string_view u = detail::trim(unit);
    while (!u.empty() && (u.front() == ')' || u.front() == ']'))
        u = detail::trim(u.substr(1));
    if (u.starts_with('.'))
        return std::nullopt;
    auto const sentence_end = u.find(". ");
    if (sentence_end != std::string_view::npos)
        u = u.substr(0, sentence_end);
    while (!u.empty() && (u.back() == '.' || u.back() == ']' || u.back() == ')' || u.back() == ','))
        u = detail::trim(u.substr(0, u.size() - 1));
    if (u.empty())
        return std::nullopt;
    return std::string(u);
}

template <class Content>
std::string body_of(Content const& c)
{
    if constexpr (std::is_same_v<Content, FormulaSet>)
        return format_formulae_body(c);
    else
        return format_reasoning_body(c);
}

} // namespace

char const* to_string(Verdict verdict)
{
    return verdict == Verdict::correct ? "correct" : "incorrect";
}

std::string format_confidence(double confidence)
{
    std::array<char, 64> buf{};
    auto const [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), confidence);
    return ec == std::errc{} ? std::string(buf.data(), ptr) : std::string("0");
}

std::string format_formulae_body(FormulaSet const& formulae)
{
    std::string out;
    for (std::size_t i = 0; i < formulae.formulae.size(); ++i)
    {
        auto const& f = formulae.formulae[i];
        out += "[Formula " + std::to_string(i + 1) + "] " + f.expression + "\n";
        for (auto const& v : f.variables)
            out += "  - " + v.symbol + ": " + v.explanation + "\n";
    }
    return out;
}

std::string format_reasoning_body(ReasoningTrace const& reasoning)
{
    std::string out;
    for (std::size_t i = 0; i < reasoning.steps.size(); ++i)
        out += "[Step " + std::to_string(i + 1) + "] " + reasoning.steps[i] + "\n";
    return out;
}

std::string format_generation(FormulaSet const& formulae, ReasoningTrace const& reasoning)
{
    std::string out;
    out += std::string(formulae_label) + "\n" + format_formulae_body(formulae);
    out += std::string(confidence_formulae_label) + " " + format_confidence(formulae.confidence) + "\n";
    out += std::string(reasoning_label) + "\n" + format_reasoning_body(reasoning);
    out += std::string(confidence_reasoning_label) + " " + format_confidence(reasoning.confidence) + "\n";
    return out;
}

std::string format_review(Verdict verdict, ReviewedContent const& revised, double confidence)
{
    std::string out = std::string(verdict_label) + " " + to_string(verdict) + "\n";
    std::visit(
        [&](auto const& content) {
            using T = std::decay_t<decltype(content)>;
            out += std::string(std::is_same_v<T, FormulaSet> ? revised_formulae_label : revised_reasoning_label) + "\n";
            out += body_of(content);
        },
        revised);
    out += std::string(confidence_label) + " " + format_confidence(confidence) + "\n";
    return out;
}

std::string normalized_text(ReviewedContent const& content)
{
    return std::visit([](auto const& c) { return detail::normalize_whitespace(body_of(c)); }, content);
}

GenerationParse parse_generation(std::string_view text)
{
    auto const blocks = segment(text);
    auto const* formulae_block = find_block(blocks, {Label::formulae});
    auto const* reasoning_block = find_block(blocks, {Label::reasoning});
    if (formulae_block == nullptr)
        throw ParseError("generation is missing the FORMULAE block", excerpt(text));
    if (reasoning_block == nullptr)
        throw ParseError("generation is missing the REASONING block", excerpt(text));

    GenerationParse out;
    out.formulae.formulae = parse_formulae_lines(formulae_block->lines, out.warnings);
    if (out.formulae.formulae.empty())
        throw ParseError("FORMULAE block is empty", excerpt(text));
    out.reasoning.steps = parse_step_lines(reasoning_block->lines);
    if (out.reasoning.steps.empty())
        throw ParseError("REASONING block is empty", excerpt(text));

    auto score = [&](Label label, char const* name) {
        auto const value = block_score(find_block(blocks, {label}));
        if (!value)
        {
            out.warnings.push_back(std::string(name) + " missing; defaulting to 0");
            return 0.0;
        }
        return clamp_score(*value, name, out.warnings);
    };
    out.formulae.confidence = score(Label::confidence_formulae, "CONFIDENCE_FORMULAE");
    out.reasoning.confidence = score(Label::confidence_reasoning, "CONFIDENCE_REASONING");
    return out;
}

ReviewOutcome parse_review(std::string_view text, ReviewedContent const& reviewed)
{
    auto const blocks = segment(text);

    auto const* verdict_block = find_block(blocks, {Label::verdict});
    if (verdict_block == nullptr || verdict_block->lines.empty())
        throw ParseError("review is missing the VERDICT line", excerpt(text));
    auto const verdict_text = detail::to_lower(strip_decoration(verdict_block->lines.front()));
    ReviewOutcome out;
    if (verdict_text.starts_with("incorrect") || verdict_text.starts_with("wrong"))
        out.verdict = Verdict::incorrect;
    else if (verdict_text.starts_with("correct") || verdict_text.starts_with("right"))
        out.verdict = Verdict::correct;
    else
        throw ParseError("unrecognized verdict '" + verdict_text + "'", excerpt(text));

    auto const score = block_score(find_block(blocks, {Label::confidence}));
    if (!score)
        throw ParseError("review is missing the CONFIDENCE line", excerpt(text));
    out.confidence = clamp_score(*score, "CONFIDENCE", out.warnings);

    bool const formulae_review = std::holds_alternative<FormulaSet>(reviewed);
    auto const* revision_block = formulae_review ? find_block(blocks, {Label::revised_formulae, Label::formulae})
                                                 : find_block(blocks, {Label::revised_reasoning, Label::reasoning});

    std::optional<ReviewedContent> revision;
    if (revision_block != nullptr)
    {
        if (formulae_review)
        {
            FormulaSet f;
            f.formulae = parse_formulae_lines(revision_block->lines, out.warnings);
            f.confidence = out.confidence;
            if (!f.formulae.empty())
                revision = std::move(f);
        }
        else
        {
            ReasoningTrace r;
            r.steps = parse_step_lines(revision_block->lines);
            r.confidence = out.confidence;
            if (!r.steps.empty())
                revision = std::move(r);
        }
    }

    if (out.verdict == Verdict::correct)
    {
        if (revision && normalized_text(*revision) != normalized_text(reviewed))
            out.warnings.push_back("verdict is correct but the revision differs; keeping the reviewed content");
        out.revised = reviewed;
    }
    else if (revision)
    {
        out.revised = std::move(*revision);
    }
    else
    {
        out.warnings.push_back("verdict is incorrect but no revision was given; keeping the reviewed content");
        out.revised = reviewed;
    }
    return out;
}

FinalAnswer extract_final_answer(std::string_view text)
{
    auto const lowered = detail::to_lower(text);
    auto const pos = lowered.rfind(detail::to_lower(answer_sentinel));
    if (pos == std::string::npos)
        throw ParseError("no answer sentence (\"The answer is therefore ...\") found", excerpt(text));

    auto const tail = text.substr(pos);
    FinalAnswer answer;
    auto const line_end = tail.find('\n');
    answer.raw_sentence = std::string(detail::trim(tail.substr(0, line_end)));

    auto s = tail.substr(answer_sentinel.size());
    skip_answer_prefix(s);

    bool negative = false;
    consume_sign(s, negative);
    skip_spaces(s);
    std::string mantissa = take_digits(s);
    // Thousands separators: "1,234.5".
    while (s.size() >= 4 && s.front() == ',' && std::isdigit(static_cast<unsigned char>(s[1])) &&
           std::isdigit(static_cast<unsigned char>(s[2])) && std::isdigit(static_cast<unsigned char>(s[3])) &&
           (s.size() == 4 || !std::isdigit(static_cast<unsigned char>(s[4]))))
    {
        s.remove_prefix(1);
        mantissa += take_digits(s);
    }
    if (s.size() >= 2 && s.front() == '.' && std::isdigit(static_cast<unsigned char>(s[1])))
    {
        s.remove_prefix(1);
        mantissa += "." + take_digits(s);
    }
    if (mantissa.empty())
        throw ParseError("answer sentence has no parseable number", answer.raw_sentence);

    long exponent = 0;
    if (s.size() >= 2 && (s.front() == 'e' || s.front() == 'E'))
    {
        auto t = s.substr(1);
        bool exp_negative = false;
        consume_sign(t, exp_negative);
        auto const digits = take_digits(t);
        if (!digits.empty())
        {
            exponent = std::stol(digits) * (exp_negative ? -1 : 1);
            s = t;
        }
    }
    else if (auto const power = parse_power_of_ten(s))
    {
        exponent = *power;
    }

    auto const composed = (negative ? "-" : "") + mantissa + "e" + std::to_string(exponent);
    auto const value = detail::parse_double(composed);
    if (!value)
        throw ParseError("answer value '" + composed + "' is not a finite number", answer.raw_sentence);
    answer.value = *value;
    answer.unit_text = clean_unit(s);
    return answer;
}

std::string parse_code_block(std::string_view text)
{
    constexpr std::string_view fence = "```";
    std::optional<std::pair<std::size_t, std::size_t>> last;
    std::size_t pos = 0;
    while (true)
    {
        auto const open = text.find(fence, pos);
        if (open == std::string_view::npos)
            break;
        auto const line_end = text.find('\n', open + fence.size());
        if (line_end == std::string_view::npos)
            break;
        auto const close = text.find(fence, line_end + 1);
        if (close == std::string_view::npos)
            break;
        last = std::pair{line_end + 1, close};
        pos = close + fence.size();
    }
    if (!last)
        throw ParseError("no fenced code block found", excerpt(text));
    auto body = text.substr(last->first, last->second - last->first);
    if (body.ends_with('\n'))
        body.remove_suffix(1);
    return std::string(body);
}

} // namespace structchem
