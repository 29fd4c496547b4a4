// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace structchem {

enum class FailureKind
{
    no_answer,
    parse_failure,
    out_of_tolerance,
};

char const* to_string(FailureKind kind);
FailureKind failure_kind_from_string(std::string_view name);

inline constexpr double absolute_tolerance = 0.1;
inline constexpr double relative_tolerance = 0.05;
/// Used in place of the relative rule when the gold answer is exactly 0.
inline constexpr double zero_gold_tolerance = 0.05;

/// Tolerance rule for free-response answers:
///   |gold| >= 1 : |pred - gold| <= 0.1
///   0 < |gold| < 1 : |pred - gold| / |gold| <= 0.05
///   gold == 0 : |pred - gold| <= 0.05
/// Inputs are read as the decimals they were parsed from: a difference within
/// a few ulps of the bound counts as on the bound, so 45.8 vs 45.7 passes.
bool grade_answer(double predicted, double gold);

struct GradeResult
{
    std::string problem_id;
    std::string dataset;
    std::string method;
    std::string mode;
    std::optional<double> predicted;
    double gold = 0.0;
    bool correct = false;
    std::optional<FailureKind> failure_kind;
};

/// Grades one answer; `predicted` absent means the run produced none, in which
/// case `failure` (default no_answer) is recorded.
GradeResult make_grade(std::string problem_id, std::optional<double> predicted, double gold,
                       std::optional<FailureKind> failure = std::nullopt);

nlohmann::ordered_json to_json(GradeResult const& g);
GradeResult grade_from_json(nlohmann::json const& j);

struct Grouping
{
    bool by_dataset = true;
    bool by_method = true;
    bool by_mode = true;
};

struct AccuracyCell
{
    std::size_t correct = 0;
    std::size_t total = 0;
    /// 100 * correct / total, or 0 when total is 0.
    double accuracy = 0.0;
    bool empty() const { return total == 0; }
    std::size_t no_answer = 0;
    std::size_t parse_failure = 0;
};

struct AccuracyRow
{
    std::string method;
    std::string mode;
    /// Aligned with AccuracyTable::datasets.
    std::vector<AccuracyCell> cells;
    /// Unweighted mean of the non-empty cells' accuracies.
    double average = 0.0;
    std::size_t empty_cells = 0;
};

struct AccuracyTable
{
    std::vector<std::string> datasets;
    std::vector<AccuracyRow> rows;

    [[nodiscard]] AccuracyRow const* find(std::string const& method, std::string const& mode) const;
};

/// Failed runs count as incorrect. Ungrouped dimensions collapse to "*".
/// Rows and columns come out sorted, so the table ignores input order.
AccuracyTable aggregate(std::span<GradeResult const> results, Grouping const& grouping = {});

/// Accuracy rounded half away from zero to two decimals.
double round2(double value);

nlohmann::ordered_json to_json(AccuracyTable const& table);

/// Aligned plain-text table: one block per mode, one row per method,
/// dataset columns then Avg.
std::string format_table(AccuracyTable const& table);

} // namespace structchem
