// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "structchem/backend.hpp"
#include "structchem/dataset.hpp"
#include "structchem/parse.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace support {

inline std::filesystem::path fixture_dir()
{
    return STRUCTCHEM_FIXTURE_DIR;
}

inline std::filesystem::path source_dir()
{
    return STRUCTCHEM_SOURCE_DIR;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
public:
    TempDir()
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("structchem-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(TempDir const&) = delete;
    TempDir& operator=(TempDir const&) = delete;

    std::filesystem::path const& path() const { return path_; }
    std::filesystem::path operator/(std::string const& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline structchem::Problem problem(std::string id, double gold, std::string statement = {},
                                   std::optional<std::string> solution = std::nullopt, std::string tag = "custom")
{
    structchem::Problem p;
    p.id = std::move(id);
    p.statement = statement.empty() ? "Compute the quantity for problem " + p.id + "." : std::move(statement);
    p.unit = "J";
    p.gold_answer = gold;
    p.gold_answer_text = std::to_string(gold);
    p.solution = std::move(solution);
    p.dataset_tag = std::move(tag);
    return p;
}

inline structchem::FormulaSet formulae(std::string const& tag, double confidence)
{
    structchem::FormulaSet f;
    f.formulae.push_back({"E = h * nu " + tag, {{"E", "photon energy"}, {"h", "the Planck constant"}, {"nu", "frequency"}}});
    f.formulae.push_back({"c = lambda * nu", {{"c", "speed of light"}, {"lambda", "wavelength"}}});
    f.confidence = confidence;
    return f;
}

inline structchem::ReasoningTrace reasoning(std::string const& tag, double confidence)
{
    return {{"Convert the wavelength to metres " + tag + ".", "Compute nu = c / lambda.", "Compute E = h * nu."}, confidence};
}

/// Scripted replies for one structured run: generation with (s_f, s_r),
/// then one incorrect-with-revision reply per listed reviewer confidence
/// (formulae first, then reasoning), then the finalize reply.
struct StructuredScript
{
    double initial_f = 0.6;
    double initial_r = 0.6;
    std::vector<double> formulae_confidences;
    std::vector<double> reasoning_confidences;
    std::string answer = "2.450";

    std::vector<std::string> replies() const
    {
        using namespace structchem;
        std::vector<std::string> out;
        out.push_back(format_generation(formulae("F0", initial_f), reasoning("R0", initial_r)));
        for (std::size_t i = 0; i < formulae_confidences.size(); ++i)
        {
            auto const c = formulae_confidences[i];
            out.push_back(format_review(Verdict::incorrect, formulae("F" + std::to_string(i + 1), c), c));
        }
        for (std::size_t i = 0; i < reasoning_confidences.size(); ++i)
        {
            auto const c = reasoning_confidences[i];
            out.push_back(format_review(Verdict::incorrect, reasoning("R" + std::to_string(i + 1), c), c));
        }
        out.push_back("Combining the formulae and steps above.\nThe answer is therefore " + answer + ".");
        return out;
    }

    void load(structchem::ScriptedOracle& oracle, std::string const& problem_id) const
    {
        for (auto& r : replies())
            oracle.push_for_problem(problem_id, std::move(r));
    }
};

} // namespace support
