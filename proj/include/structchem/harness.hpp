// SPDX-License-Identifier: Apache-2.0

// Batch execution over a problem list and the on-disk run directory:
//
//   <run>/manifest.json        config, seeds, models, template version
//   <run>/records/<id>.json    one RunRecord per problem
//   <run>/reports/             accuracy tables, error distribution, step stats
//   <run>/annotations.json     error annotations
//   <run>/corpora/             fine-tuning exports

#pragma once

#include "structchem/refine.hpp"
#include "structchem/run_record.hpp"

#include <filesystem>
#include <functional>
#include <vector>

#include <nlohmann/json.hpp>

namespace structchem {

struct HarnessOptions
{
    std::size_t concurrency = 4;
    /// Called once per finished record, serialized, in completion order.
    std::function<void(RunRecord const&)> on_record;
};

/// Runs every problem through `pipeline`. The result vector follows the
/// input order whatever the completion order.
std::vector<RunRecord> run_problems(Pipeline const& pipeline, std::vector<Problem> const& problems, RunMethod method,
                                    HarnessOptions const& options = {});

/// File name used for a problem id under records/.
std::string record_file_name(std::string const& problem_id);

void write_record(std::filesystem::path const& run_dir, RunRecord const& record);
void write_manifest(std::filesystem::path const& run_dir, nlohmann::ordered_json const& manifest);
nlohmann::json read_manifest(std::filesystem::path const& run_dir);

/// All records under <run>/records, sorted by problem id.
std::vector<RunRecord> load_records(std::filesystem::path const& run_dir);

/// Writes `text` to `path` atomically (temp file + rename), creating parents.
void write_text_file(std::filesystem::path const& path, std::string const& text);
std::string read_text_file(std::filesystem::path const& path);

} // namespace structchem
