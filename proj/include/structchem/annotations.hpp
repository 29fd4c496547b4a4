// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "structchem/run_record.hpp"

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace structchem {

enum class ErrorCategory
{
    principle,
    factual,
    reasoning,
    calculation,
};

char const* to_string(ErrorCategory category);
ErrorCategory error_category_from_string(std::string_view name);

struct Annotation
{
    std::string problem_id;
    std::string dataset;
    std::string method;
    std::string mode;
    ErrorCategory category = ErrorCategory::principle;
    std::string note;

    bool operator==(Annotation const&) const = default;
};

struct CategoryShare
{
    std::size_t count = 0;
    double proportion = 0.0;
};

/// Per dataset, per category, in the order of ErrorCategory.
using ErrorDistribution = std::map<std::string, std::map<ErrorCategory, CategoryShare>>;

/// Manual error labels for incorrect runs. One annotation per
/// (problem, method, mode); annotating again replaces it. Every change is
/// written through to the backing file when there is one.
class AnnotationStore
{
public:
    AnnotationStore() = default;
    /// Loads `path` if it exists.
    explicit AnnotationStore(std::filesystem::path path);

    /// Throws AnnotationError if the record was graded correct.
    void annotate(RunRecord const& record, ErrorCategory category, std::string note);

    [[nodiscard]] std::vector<Annotation> annotations() const;
    [[nodiscard]] ErrorDistribution distribution() const;

private:
    void save_locked() const;

    mutable std::mutex mutex_;
    std::optional<std::filesystem::path> path_;
    std::vector<Annotation> items_;
};

nlohmann::ordered_json to_json(ErrorDistribution const& distribution);

} // namespace structchem
