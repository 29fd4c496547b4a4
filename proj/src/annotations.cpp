// SPDX-License-Identifier: Apache-2.0

#include "structchem/annotations.hpp"

#include "structchem/errors.hpp"
#include "structchem/harness.hpp"

#include <array>

namespace structchem {

namespace {

constexpr std::array<ErrorCategory, 4> all_categories{
    ErrorCategory::principle, ErrorCategory::factual, ErrorCategory::reasoning, ErrorCategory::calculation};

} // namespace

char const* to_string(ErrorCategory category)
{
    switch (category)
    {
    case ErrorCategory::principle: return "principle";
    case ErrorCategory::factual: return "factual";
    case ErrorCategory::reasoning: return "reasoning";
    case ErrorCategory::calculation: return "calculation";
    }
    return "?";
}

ErrorCategory error_category_from_string(std::string_view name)
{
    for (auto const c : all_categories)
        if (name == to_string(c))
            return c;
    throw AnnotationError("unknown error category '" + std::string(name) +
                          "' (expected principle, factual, reasoning or calculation)");
}

AnnotationStore::AnnotationStore(std::filesystem::path path)
    : path_(std::move(path))
{
    if (!std::filesystem::exists(*path_))
        return;
    try
    {
        auto const doc = nlohmann::json::parse(read_text_file(*path_));
        for (auto const& a : doc.at("annotations"))
            items_.push_back({a.at("problem_id").get<std::string>(), a.value("dataset", ""), a.value("method", ""),
                              a.value("mode", ""), error_category_from_string(a.at("category").get<std::string>()),
                              a.value("note", "")});
    }
    catch (nlohmann::json::exception const& e)
    {
        throw AnnotationError(path_->string() + ": " + e.what());
    }
}

void AnnotationStore::annotate(RunRecord const& record, ErrorCategory category, std::string note)
{
    if (record.grade.correct)
        throw AnnotationError("problem '" + record.problem.id + "' was graded correct; only incorrect runs are annotated");

    Annotation a{record.problem.id, record.problem.dataset_tag, to_string(record.method), to_string(record.mode),
                 category, std::move(note)};
    std::lock_guard lock(mutex_);
    auto const same = [&](Annotation const& b) {
        return b.problem_id == a.problem_id && b.method == a.method && b.mode == a.mode;
    };
    if (auto it = std::find_if(items_.begin(), items_.end(), same); it != items_.end())
        *it = std::move(a);
    else
        items_.push_back(std::move(a));
    save_locked();
}

std::vector<Annotation> AnnotationStore::annotations() const
{
    std::lock_guard lock(mutex_);
    return items_;
}

ErrorDistribution AnnotationStore::distribution() const
{
    std::lock_guard lock(mutex_);
    ErrorDistribution out;
    std::map<std::string, std::size_t> totals;
    for (auto const& a : items_)
    {
        auto& row = out[a.dataset];
        if (row.empty())
            for (auto const c : all_categories)
                row[c] = {};
        ++row[a.category].count;
        ++totals[a.dataset];
    }
    for (auto& [dataset, row] : out)
        for (auto& [category, share] : row)
            share.proportion = static_cast<double>(share.count) / static_cast<double>(totals[dataset]);
    return out;
}

void AnnotationStore::save_locked() const
{
    if (!path_)
        return;
    nlohmann::ordered_json doc;
    auto list = nlohmann::ordered_json::array();
    for (auto const& a : items_)
        list.push_back({{"problem_id", a.problem_id},
                        {"dataset", a.dataset},
                        {"method", a.method},
                        {"mode", a.mode},
                        {"category", to_string(a.category)},
                        {"note", a.note}});
    doc["annotations"] = std::move(list);
    write_text_file(*path_, doc.dump(2) + "\n");
}

nlohmann::ordered_json to_json(ErrorDistribution const& distribution)
{
    auto rows = nlohmann::ordered_json::array();
    for (auto const& [dataset, row] : distribution)
        for (auto const& [category, share] : row)
            rows.push_back({{"dataset", dataset},
                            {"category", to_string(category)},
                            {"count", share.count},
                            {"proportion", share.proportion}});
    return rows;
}

} // namespace structchem
