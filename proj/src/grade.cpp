// SPDX-License-Identifier: Apache-2.0

#include "structchem/grade.hpp"

#include "structchem/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace structchem {

char const* to_string(FailureKind kind)
{
    switch (kind)
    {
    case FailureKind::no_answer: return "no_answer";
    case FailureKind::parse_failure: return "parse_failure";
    case FailureKind::out_of_tolerance: return "out_of_tolerance";
    }
    return "?";
}

FailureKind failure_kind_from_string(std::string_view name)
{
    for (auto const k : {FailureKind::no_answer, FailureKind::parse_failure, FailureKind::out_of_tolerance})
        if (name == to_string(k))
            return k;
    throw Error("unknown failure kind '" + std::string(name) + "'");
}

bool grade_answer(double predicted, double gold)
{
    auto const diff = std::abs(predicted - gold);
    auto const magnitude = std::abs(gold);
    // Both inputs and the difference carry rounding error of a few ulps of
    // the larger operand; treat that band as exact.
    auto const slack = 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(predicted), magnitude);

    if (gold == 0.0)
        return diff <= zero_gold_tolerance + slack;
    if (magnitude >= 1.0)
        return diff <= absolute_tolerance + slack;
    return diff <= relative_tolerance * magnitude + slack;
}

GradeResult make_grade(std::string problem_id, std::optional<double> predicted, double gold, std::optional<FailureKind> failure)
{
    GradeResult g;
    g.problem_id = std::move(problem_id);
    g.gold = gold;
    g.predicted = predicted;
    if (!predicted)
    {
        g.correct = false;
        g.failure_kind = failure.value_or(FailureKind::no_answer);
        return g;
    }
    g.correct = grade_answer(*predicted, gold);
    if (!g.correct)
        g.failure_kind = FailureKind::out_of_tolerance;
    return g;
}

nlohmann::ordered_json to_json(GradeResult const& g)
{
    nlohmann::ordered_json j;
    j["problem_id"] = g.problem_id;
    j["dataset"] = g.dataset;
    j["method"] = g.method;
    j["mode"] = g.mode;
    j["predicted"] = g.predicted ? nlohmann::ordered_json(*g.predicted) : nlohmann::ordered_json(nullptr);
    j["gold"] = g.gold;
    j["correct"] = g.correct;
    j["failure_kind"] = g.failure_kind ? nlohmann::ordered_json(to_string(*g.failure_kind)) : nlohmann::ordered_json(nullptr);
    return j;
}

GradeResult grade_from_json(nlohmann::json const& j)
{
    GradeResult g;
    g.problem_id = j.value("problem_id", "");
    g.dataset = j.value("dataset", "");
    g.method = j.value("method", "");
    g.mode = j.value("mode", "");
    if (j.contains("predicted") && !j["predicted"].is_null())
        g.predicted = j["predicted"].get<double>();
    g.gold = j.value("gold", 0.0);
    g.correct = j.value("correct", false);
    if (j.contains("failure_kind") && !j["failure_kind"].is_null())
        g.failure_kind = failure_kind_from_string(j["failure_kind"].get<std::string>());
    return g;
}

AccuracyRow const* AccuracyTable::find(std::string const& method, std::string const& mode) const
{
    for (auto const& r : rows)
        if (r.method == method && r.mode == mode)
            return &r;
    return nullptr;
}

double round2(double value)
{
    return std::round(value * 100.0) / 100.0;
}

AccuracyTable aggregate(std::span<GradeResult const> results, Grouping const& grouping)
{
    auto key = [](bool on, std::string const& v) { return on ? v : std::string("*"); };

    std::set<std::string> datasets;
    std::map<std::pair<std::string, std::string>, std::map<std::string, AccuracyCell>> grid;
    for (auto const& r : results)
    {
        auto const ds = key(grouping.by_dataset, r.dataset);
        datasets.insert(ds);
        auto& cell = grid[{key(grouping.by_method, r.method), key(grouping.by_mode, r.mode)}][ds];
        ++cell.total;
        if (r.correct)
            ++cell.correct;
        if (r.failure_kind == FailureKind::no_answer)
            ++cell.no_answer;
        if (r.failure_kind == FailureKind::parse_failure)
            ++cell.parse_failure;
    }

    AccuracyTable table;
    table.datasets.assign(datasets.begin(), datasets.end());
    for (auto& [row_key, cells] : grid)
    {
        AccuracyRow row;
        row.method = row_key.first;
        row.mode = row_key.second;
        double sum = 0.0;
        std::size_t used = 0;
        for (auto const& ds : table.datasets)
        {
            auto cell = cells[ds];
            if (cell.total > 0)
            {
                cell.accuracy = 100.0 * static_cast<double>(cell.correct) / static_cast<double>(cell.total);
                sum += cell.accuracy;
                ++used;
            }
            else
            {
                ++row.empty_cells;
            }
            row.cells.push_back(cell);
        }
        row.average = used == 0 ? 0.0 : sum / static_cast<double>(used);
        table.rows.push_back(std::move(row));
    }
    return table;
}

nlohmann::ordered_json to_json(AccuracyTable const& table)
{
    nlohmann::ordered_json j;
    j["datasets"] = table.datasets;
    auto rows = nlohmann::ordered_json::array();
    for (auto const& r : table.rows)
    {
        nlohmann::ordered_json row;
        row["method"] = r.method;
        row["mode"] = r.mode;
        auto cells = nlohmann::ordered_json::object();
        for (std::size_t i = 0; i < table.datasets.size(); ++i)
        {
            auto const& c = r.cells[i];
            cells[table.datasets[i]] = {
                {"accuracy", round2(c.accuracy)},
                {"correct", c.correct},
                {"total", c.total},
                {"empty", c.empty()},
                {"no_answer", c.no_answer},
                {"parse_failure", c.parse_failure},
            };
        }
        row["cells"] = std::move(cells);
        row["average"] = round2(r.average);
        row["empty_cells"] = r.empty_cells;
        rows.push_back(std::move(row));
    }
    j["rows"] = std::move(rows);
    return j;
}

std::string format_table(AccuracyTable const& table)
{
    std::size_t method_width = 6;
    for (auto const& r : table.rows)
        method_width = std::max(method_width, r.method.size());
    std::size_t col_width = 8;
    for (auto const& d : table.datasets)
        col_width = std::max(col_width, d.size() + 2);

    std::ostringstream out;
    auto rule = [&] {
        out << std::string(method_width + (table.datasets.size() + 1) * col_width, '-') << '\n';
    };

    std::set<std::string> modes;
    for (auto const& r : table.rows)
        modes.insert(r.mode);

    out << std::left << std::setw(static_cast<int>(method_width)) << "Method";
    for (auto const& d : table.datasets)
        out << std::right << std::setw(static_cast<int>(col_width)) << d;
    out << std::right << std::setw(static_cast<int>(col_width)) << "Avg." << '\n';

    for (auto const& mode : modes)
    {
        rule();
        out << mode << '\n';
        for (auto const& r : table.rows)
        {
            if (r.mode != mode)
                continue;
            out << std::left << std::setw(static_cast<int>(method_width)) << r.method;
            for (auto const& c : r.cells)
            {
                std::ostringstream cell;
                if (c.empty())
                    cell << "n/a";
                else
                    cell << std::fixed << std::setprecision(2) << round2(c.accuracy);
                out << std::right << std::setw(static_cast<int>(col_width)) << cell.str();
            }
            std::ostringstream avg;
            avg << std::fixed << std::setprecision(2) << round2(r.average);
            if (r.empty_cells > 0)
                avg << '*';
            out << std::right << std::setw(static_cast<int>(col_width)) << avg.str() << '\n';
        }
    }
    rule();
    bool const any_empty = std::any_of(table.rows.begin(), table.rows.end(), [](auto const& r) { return r.empty_cells > 0; });
    if (any_empty)
        out << "* average over non-empty cells only\n";
    return out.str();
}

} // namespace structchem
