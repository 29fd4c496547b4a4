// SPDX-License-Identifier: Apache-2.0

#include "structchem/dataset.hpp"

#include "structchem/errors.hpp"
#include "text_util.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace structchem {

namespace {

using nlohmann::json;

std::string source_key(FieldMap const& map, std::string const& canonical)
{
    auto const it = map.find(canonical);
    return it == map.end() ? canonical : it->second;
}

std::string record_error(std::size_t index, std::string const& what)
{
    return "record " + std::to_string(index) + ": " + what;
}

std::optional<std::string> optional_text(json const& record, std::string const& key)
{
    auto const it = record.find(key);
    if (it == record.end() || it->is_null())
        return std::nullopt;
    if (it->is_string())
        return it->get<std::string>();
    return it->dump();
}

Problem parse_record(json const& record, std::size_t index, LoadOptions const& options, std::string const& default_tag)
{
    if (!record.is_object())
        throw DatasetError(record_error(index, "expected an object"));

    auto const& map = options.field_map;
    auto const statement_key = source_key(map, "problem_text");
    auto const answer_key = source_key(map, "answer_number");

    Problem p;
    auto statement = optional_text(record, statement_key);
    if (!statement)
        throw DatasetError(record_error(index, "missing field '" + statement_key + "'"));
    p.statement = *statement;

    auto const answer = record.find(answer_key);
    if (answer == record.end() || answer->is_null())
        throw DatasetError(record_error(index, "missing field '" + answer_key + "'"));
    if (answer->is_number())
    {
        p.gold_answer = answer->get<double>();
        p.gold_answer_text = answer->dump();
    }
    else if (answer->is_string())
    {
        p.gold_answer_text = std::string(detail::trim(answer->get<std::string>()));
        auto const value = detail::parse_double(p.gold_answer_text);
        if (!value)
            throw DatasetError(record_error(index, "non-numeric gold answer '" + p.gold_answer_text + "'"));
        p.gold_answer = *value;
    }
    else
    {
        throw DatasetError(record_error(index, "non-numeric gold answer " + answer->dump()));
    }
    if (!std::isfinite(p.gold_answer))
        throw DatasetError(record_error(index, "gold answer is not finite"));

    auto id = optional_text(record, source_key(map, "id"));
    p.id = id ? std::string(detail::trim(*id)) : default_tag + "-" + std::to_string(index);
    p.unit = optional_text(record, source_key(map, "unit")).value_or("");

    auto solution = optional_text(record, source_key(map, "solution"));
    if (solution && !detail::trim(*solution).empty())
        p.solution = std::move(*solution);

    auto tag = optional_text(record, source_key(map, "source"));
    p.dataset_tag = tag && !detail::trim(*tag).empty() ? std::string(detail::trim(*tag)) : default_tag;
    return p;
}

std::vector<json> split_records(std::string const& text)
{
    auto const body = detail::trim(text);
    if (body.empty())
        return {};

    if (body.front() == '[' || body.front() == '{')
    {
        try
        {
            auto doc = json::parse(body);
            if (doc.is_array())
                return doc.get<std::vector<json>>();
            if (doc.is_object() && doc.contains("problems") && doc["problems"].is_array())
                return doc["problems"].get<std::vector<json>>();
            if (doc.is_object())
                return {doc};
        }
        catch (json::parse_error const&)
        {
            // fall through to JSON lines
        }
    }

    std::vector<json> records;
    std::size_t line_no = 0;
    for (auto line : detail::split_lines(body))
    {
        ++line_no;
        line = detail::trim(line);
        if (line.empty())
            continue;
        try
        {
            records.push_back(json::parse(line));
        }
        catch (json::parse_error const& e)
        {
            throw DatasetError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

// Unbiased integer in [0, bound) from a 64-bit engine. The engine's output
// sequence is fixed by the standard, unlike std::uniform_int_distribution.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound)
{
    auto const limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw = 0;
    do
        draw = rng();
    while (draw >= limit);
    return draw % bound;
}

} // namespace

std::vector<Problem> Dataset::all() const
{
    auto out = problems_wo_solutions;
    out.insert(out.end(), problems_with_solutions.begin(), problems_with_solutions.end());
    return out;
}

Problem const* Dataset::find(std::string const& id) const
{
    for (auto const* split : {&problems_wo_solutions, &problems_with_solutions})
        for (auto const& p : *split)
            if (p.id == id)
                return &p;
    return nullptr;
}

FieldMap parse_field_map(std::vector<std::string> const& pairs)
{
    FieldMap map;
    for (auto const& pair : pairs)
    {
        auto const eq = pair.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == pair.size())
            throw ConfigError("field map entry '" + pair + "' is not canonical=source");
        map[pair.substr(0, eq)] = pair.substr(eq + 1);
    }
    return map;
}

Dataset parse_dataset(std::string const& text, LoadOptions const& options)
{
    Dataset ds;
    ds.name = options.name;

    std::set<std::string> seen;
    auto const records = split_records(text);
    for (std::size_t i = 0; i < records.size(); ++i)
    {
        auto p = parse_record(records[i], i, options, ds.name);
        if (!seen.insert(p.id).second)
            throw DatasetError(record_error(i, "duplicate problem id '" + p.id + "'"));
        if (p.solution)
            ds.problems_with_solutions.push_back(std::move(p));
        else
            ds.problems_wo_solutions.push_back(std::move(p));
    }
    return ds;
}

Dataset load_dataset(std::filesystem::path const& path, LoadOptions const& options)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DatasetError("cannot open dataset file " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();

    auto opts = options;
    if (opts.name.empty())
        opts.name = path.stem().string();
    try
    {
        return parse_dataset(buffer.str(), opts);
    }
    catch (DatasetError const& e)
    {
        throw DatasetError(path.string() + ": " + e.what());
    }
}

nlohmann::json dataset_to_json(Dataset const& ds)
{
    auto records = json::array();
    for (auto const& p : ds.all())
    {
        json r = {
            {"id", p.id},
            {"problem_text", p.statement},
            {"unit", p.unit},
            {"answer_number", p.gold_answer_text},
            {"source", p.dataset_tag},
        };
        if (p.solution)
            r["solution"] = *p.solution;
        records.push_back(std::move(r));
    }
    return records;
}

void save_dataset(Dataset const& ds, std::filesystem::path const& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DatasetError("cannot write dataset file " + path.string());
    out << dataset_to_json(ds).dump(2) << '\n';
}

DemoSet sample_demonstrations(Dataset const& ds, std::size_t k, std::uint64_t seed)
{
    auto const& pool = ds.problems_with_solutions;
    if (k > pool.size())
        throw DatasetError("insufficient demonstration pool: requested " + std::to_string(k) + " but only " +
                           std::to_string(pool.size()) + " problems with solutions");

    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    // Partial Fisher-Yates: the first k slots end up a uniform k-permutation.
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < k; ++i)
    {
        auto const j = i + static_cast<std::size_t>(uniform_below(rng, pool.size() - i));
        std::swap(order[i], order[j]);
    }

    DemoSet set;
    set.seed = seed;
    set.demos.reserve(k);
    for (std::size_t i = 0; i < k; ++i)
        set.demos.push_back(pool[order[i]]);
    return set;
}

DatasetStats dataset_stats(Dataset const& ds, std::optional<std::vector<TraceSummary>> const& traces)
{
    DatasetStats stats;
    stats.name = ds.name;
    stats.count_wo_solutions = ds.problems_wo_solutions.size();
    stats.count_with_solutions = ds.problems_with_solutions.size();
    if (!traces)
        return stats;

    std::map<std::size_t, std::size_t> histogram;
    double step_sum = 0.0;
    double formula_sum = 0.0;
    for (auto const& t : *traces)
    {
        ++histogram[t.steps];
        step_sum += static_cast<double>(t.steps);
        formula_sum += static_cast<double>(t.formulae);
    }
    stats.step_histogram = std::move(histogram);
    if (!traces->empty())
    {
        auto const n = static_cast<double>(traces->size());
        stats.mean_steps = step_sum / n;
        stats.mean_formulae = formula_sum / n;
    }
    return stats;
}

nlohmann::ordered_json stats_to_json(DatasetStats const& stats)
{
    nlohmann::ordered_json doc;
    doc["dataset"] = stats.name;
    doc["count_wo_solutions"] = stats.count_wo_solutions;
    doc["count_with_solutions"] = stats.count_with_solutions;
    if (stats.step_histogram)
    {
        nlohmann::ordered_json hist = nlohmann::ordered_json::object();
        for (auto const& [steps, count] : *stats.step_histogram)
            hist[std::to_string(steps)] = count;
        doc["step_histogram"] = hist;
        doc["mean_steps"] = stats.mean_steps ? nlohmann::ordered_json(*stats.mean_steps) : nlohmann::ordered_json(nullptr);
        doc["mean_formulae"] = stats.mean_formulae ? nlohmann::ordered_json(*stats.mean_formulae) : nlohmann::ordered_json(nullptr);
    }
    return doc;
}

} // namespace structchem
