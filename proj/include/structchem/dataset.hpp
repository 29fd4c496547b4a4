// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace structchem {

/// One benchmark item. `solution` is set exactly for problems in the with-solution split.
struct Problem
{
    std::string id;
    std::string statement;
    std::string unit;
    double gold_answer = 0.0;
    /// Gold answer as it appeared in the source file ("2.450", "1.312e-20", ...).
    std::string gold_answer_text;
    std::optional<std::string> solution;
    std::string dataset_tag;

    bool operator==(Problem const&) const = default;
};

struct Dataset
{
    std::string name;
    std::vector<Problem> problems_wo_solutions;
    std::vector<Problem> problems_with_solutions;

    [[nodiscard]] std::size_t size() const
    {
        return problems_wo_solutions.size() + problems_with_solutions.size();
    }

    /// Both splits, without-solution problems first.
    [[nodiscard]] std::vector<Problem> all() const;

    [[nodiscard]] Problem const* find(std::string const& id) const;

    bool operator==(Dataset const&) const = default;
};

struct DemoSet
{
    std::vector<Problem> demos;
    std::uint64_t seed = 0;

    [[nodiscard]] bool empty() const { return demos.empty(); }
    bool operator==(DemoSet const&) const = default;
};

/// Maps canonical field names (id, problem_text, unit, answer_number, solution, source)
/// to the names used by a source file.
using FieldMap = std::map<std::string, std::string>;

/// Parses "canonical=source" pairs as given on the command line.
FieldMap parse_field_map(std::vector<std::string> const& pairs);

struct LoadOptions
{
    FieldMap field_map;
    /// Dataset name and default problem tag. Empty means the file stem.
    std::string name;
};

/// Loads a JSON array of records or a JSON-lines file. Records with a non-empty
/// solution go to the with-solution split.
Dataset load_dataset(std::filesystem::path const& path, LoadOptions const& options = {});

/// Same as load_dataset but from in-memory text; `name` is used as the dataset name.
Dataset parse_dataset(std::string const& text, LoadOptions const& options);

/// Canonical JSON array form; load_dataset(save_dataset(ds)) == ds.
nlohmann::json dataset_to_json(Dataset const& ds);
void save_dataset(Dataset const& ds, std::filesystem::path const& path);

/// Draws k distinct problems from the with-solution split, uniformly without
/// replacement. Identical (ds, k, seed) give identical results on every platform.
DemoSet sample_demonstrations(Dataset const& ds, std::size_t k, std::uint64_t seed);

struct DatasetStats
{
    std::string name;
    std::size_t count_wo_solutions = 0;
    std::size_t count_with_solutions = 0;
    /// Present only when traces were supplied.
    std::optional<std::map<std::size_t, std::size_t>> step_histogram;
    std::optional<double> mean_steps;
    std::optional<double> mean_formulae;
};

struct TraceSummary
{
    std::size_t steps = 0;
    std::size_t formulae = 0;
};

DatasetStats dataset_stats(Dataset const& ds, std::optional<std::vector<TraceSummary>> const& traces = std::nullopt);

nlohmann::ordered_json stats_to_json(DatasetStats const& stats);

} // namespace structchem
