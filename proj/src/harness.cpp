// SPDX-License-Identifier: Apache-2.0

#include "structchem/harness.hpp"

#include "structchem/errors.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace structchem {

std::vector<RunRecord> run_problems(Pipeline const& pipeline, std::vector<Problem> const& problems, RunMethod method,
                                    HarnessOptions const& options)
{
    std::vector<RunRecord> results(problems.size());
    std::atomic<std::size_t> next{0};
    std::mutex writer;
    std::exception_ptr first_error;

    auto worker = [&] {
        for (;;)
        {
            auto const i = next.fetch_add(1);
            if (i >= problems.size())
                return;
            try
            {
                results[i] = pipeline.run(problems[i], method);
                if (options.on_record)
                {
                    std::lock_guard lock(writer);
                    options.on_record(results[i]);
                }
            }
            catch (...)
            {
                std::lock_guard lock(writer);
                if (!first_error)
                    first_error = std::current_exception();
                next.store(problems.size());
                return;
            }
        }
    };

    auto const threads = std::clamp<std::size_t>(options.concurrency, 1, std::max<std::size_t>(problems.size(), 1));
    if (threads == 1)
    {
        worker();
    }
    else
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back(worker);
    }
    if (first_error)
        std::rethrow_exception(first_error);
    return results;
}

std::string record_file_name(std::string const& problem_id)
{
    std::string name;
    for (char c : problem_id)
        name += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
    if (name.empty() || name.front() == '.')
        name.insert(name.begin(), '_');
    // Sanitizing can merge distinct ids; the hash keeps them apart.
    if (name != problem_id)
        name += "-" + detail::to_hex(detail::fnv1a(problem_id)).substr(0, 8);
    return name + ".json";
}

void write_text_file(std::filesystem::path const& path, std::string const& text)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error("cannot write " + tmp.string());
        out << text;
        if (!out)
            throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_text_file(std::filesystem::path const& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_record(std::filesystem::path const& run_dir, RunRecord const& record)
{
    write_text_file(run_dir / "records" / record_file_name(record.problem.id), to_json(record).dump(2) + "\n");
}

void write_manifest(std::filesystem::path const& run_dir, nlohmann::ordered_json const& manifest)
{
    write_text_file(run_dir / "manifest.json", manifest.dump(2) + "\n");
}

nlohmann::json read_manifest(std::filesystem::path const& run_dir)
{
    auto const path = run_dir / "manifest.json";
    try
    {
        return nlohmann::json::parse(read_text_file(path));
    }
    catch (nlohmann::json::exception const& e)
    {
        throw Error(path.string() + ": " + e.what());
    }
}

std::vector<RunRecord> load_records(std::filesystem::path const& run_dir)
{
    auto const dir = run_dir / "records";
    if (!std::filesystem::is_directory(dir))
        throw Error("no records directory in " + run_dir.string());

    std::vector<std::filesystem::path> files;
    for (auto const& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<RunRecord> records;
    for (auto const& f : files)
    {
        try
        {
            records.push_back(record_from_json(nlohmann::json::parse(read_text_file(f))));
        }
        catch (nlohmann::json::exception const& e)
        {
            throw Error(f.string() + ": " + e.what());
        }
        catch (Error const& e)
        {
            throw Error(f.string() + ": " + e.what());
        }
    }
    std::sort(records.begin(), records.end(),
              [](RunRecord const& a, RunRecord const& b) { return a.problem.id < b.problem.id; });
    return records;
}

} // namespace structchem
