// SPDX-License-Identifier: Apache-2.0

#include "structchem/sandbox.hpp"

#include "structchem/errors.hpp"
#include "text_util.hpp"

#include <array>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace structchem {

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::size_t max_runner_output = 4 * 1024 * 1024;

struct Pipe
{
    int fds[2] = {-1, -1};

    Pipe()
    {
        if (::pipe(fds) != 0)
            throw SandboxError(std::string("sandbox unavailable: pipe: ") + std::strerror(errno));
        ::fcntl(fds[0], F_SETFD, FD_CLOEXEC);
        ::fcntl(fds[1], F_SETFD, FD_CLOEXEC);
    }
    ~Pipe()
    {
        close_read();
        close_write();
    }
    Pipe(Pipe const&) = delete;
    Pipe& operator=(Pipe const&) = delete;

    void close_read()
    {
        if (fds[0] >= 0)
            ::close(fds[0]);
        fds[0] = -1;
    }
    void close_write()
    {
        if (fds[1] >= 0)
            ::close(fds[1]);
        fds[1] = -1;
    }
};

class TempSource
{
public:
    explicit TempSource(std::string const& source)
    {
        auto const dir = std::filesystem::temp_directory_path();
        std::random_device rd;
        for (int attempt = 0; attempt < 16; ++attempt)
        {
            auto candidate = dir / ("structchem-pot-" + detail::to_hex(rd() ^ (std::uint64_t(rd()) << 32)) + ".py");
            int fd = ::open(candidate.c_str(), O_WRONLY | O_CREAT | O_EXCL, 0600);
            if (fd < 0)
                continue;
            ::close(fd);
            path_ = candidate;
            std::ofstream out(path_, std::ios::binary);
            out << source;
            if (!out)
                throw SandboxError("cannot write sandbox source file " + path_.string());
            return;
        }
        throw SandboxError("cannot create sandbox source file in " + dir.string());
    }
    ~TempSource()
    {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }
    TempSource(TempSource const&) = delete;
    TempSource& operator=(TempSource const&) = delete;

    std::filesystem::path const& path() const { return path_; }

private:
    std::filesystem::path path_;
};

std::optional<double> json_number(nlohmann::json const& j, char const* key)
{
    if (!j.contains(key) || j[key].is_null())
        return std::nullopt;
    if (!j[key].is_number())
        throw SandboxError(std::string("sandbox record: '") + key + "' must be a number or null");
    return j[key].get<double>();
}

} // namespace

SandboxResult parse_sandbox_record(std::string_view line)
{
    auto const j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw SandboxError("sandbox record is not a JSON object: " + std::string(line.substr(0, 200)));
    for (char const* key : {"stdout", "stderr", "exit_ok"})
        if (!j.contains(key))
            throw SandboxError(std::string("sandbox record lacks '") + key + "'");

    SandboxResult r;
    r.stdout_text = j["stdout"].get<std::string>();
    r.stderr_text = j["stderr"].get<std::string>();
    r.exit_ok = j["exit_ok"].get<bool>();
    r.timed_out = j.value("timed_out", false);
    r.elapsed_seconds = json_number(j, "elapsed_s").value_or(0.0);
    r.extracted_value = json_number(j, "extracted_value");
    if (r.extracted_value && (!r.exit_ok || !std::isfinite(*r.extracted_value)))
        throw SandboxError("sandbox record has extracted_value without a clean exit");
    return r;
}

nlohmann::ordered_json to_json(SandboxResult const& r)
{
    nlohmann::ordered_json j;
    j["stdout"] = r.stdout_text;
    j["stderr"] = r.stderr_text;
    j["exit_ok"] = r.exit_ok;
    j["timed_out"] = r.timed_out;
    j["extracted_value"] = r.extracted_value ? nlohmann::ordered_json(*r.extracted_value) : nlohmann::ordered_json(nullptr);
    return j;
}

SubprocessSandbox::SubprocessSandbox(std::vector<std::string> command, std::chrono::duration<double> grace)
    : command_(std::move(command))
    , grace_(grace)
{
    if (command_.empty())
        throw ConfigError("sandbox command is empty");
}

SandboxResult SubprocessSandbox::execute(std::string const& source, std::chrono::duration<double> timeout)
{
    if (detail::trim(source).empty())
        throw SandboxError("sandbox source is empty");

    TempSource file(source);
    std::ostringstream secs;
    secs << timeout.count();

    std::vector<std::string> args = command_;
    args.insert(args.end(), {"--source", file.path().string(), "--timeout", secs.str()});
    std::vector<char*> argv;
    for (auto& a : args)
        argv.push_back(a.data());
    argv.push_back(nullptr);

    Pipe out;
    Pipe err;
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, out.fds[1], STDOUT_FILENO);
    posix_spawn_file_actions_adddup2(&actions, err.fds[1], STDERR_FILENO);
    posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);
    posix_spawnattr_t attr;
    posix_spawnattr_init(&attr);
    posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
    posix_spawnattr_setpgroup(&attr, 0);

    pid_t pid = -1;
    int const rc = ::posix_spawnp(&pid, argv[0], &actions, &attr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    posix_spawnattr_destroy(&attr);
    if (rc != 0)
        throw SandboxError("sandbox unavailable: cannot start '" + command_.front() + "': " + std::strerror(rc));
    out.close_write();
    err.close_write();

    auto const deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(timeout + grace_);
    std::string out_text;
    std::string err_text;
    std::array<pollfd, 2> fds{{{out.fds[0], POLLIN, 0}, {err.fds[0], POLLIN, 0}}};
    bool overran = false;
    while (fds[0].fd >= 0 || fds[1].fd >= 0)
    {
        auto const left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
        if (left <= 0)
        {
            overran = true;
            break;
        }
        int const n = ::poll(fds.data(), fds.size(), static_cast<int>(left));
        if (n < 0 && errno == EINTR)
            continue;
        if (n < 0)
            break;
        for (std::size_t i = 0; i < fds.size(); ++i)
        {
            if (fds[i].fd < 0 || fds[i].revents == 0)
                continue;
            std::array<char, 8192> buf;
            auto const got = ::read(fds[i].fd, buf.data(), buf.size());
            if (got <= 0)
            {
                fds[i].fd = -1;
                continue;
            }
            auto& sink = i == 0 ? out_text : err_text;
            if (sink.size() < max_runner_output)
                sink.append(buf.data(), static_cast<std::size_t>(got));
        }
    }

    if (overran)
        ::kill(-pid, SIGKILL);
    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR)
    {
    }
    if (overran)
        throw SandboxError("sandbox unavailable: runner did not finish within timeout + grace");

    // The record is the last non-empty stdout line.
    auto lines = detail::split_lines(out_text);
    while (!lines.empty() && detail::trim(lines.back()).empty())
        lines.pop_back();
    if (lines.empty())
        throw SandboxError("sandbox unavailable: runner produced no result record (exit status " +
                           std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1) + "): " +
                           err_text.substr(0, 300));
    return parse_sandbox_record(lines.back());
}

std::optional<std::vector<std::string>> resolve_sandbox_command(std::string const& command_line)
{
    std::vector<std::string> parts;
    std::istringstream in(command_line);
    for (std::string word; in >> word;)
        parts.push_back(word);
    if (parts.empty())
        return std::nullopt;

    auto const& program = parts.front();
    if (program.find('/') != std::string::npos)
    {
        if (::access(program.c_str(), X_OK) != 0)
            return std::nullopt;
        return parts;
    }
    char const* path_env = std::getenv("PATH");
    std::istringstream dirs(path_env ? path_env : "");
    for (std::string dir; std::getline(dirs, dir, ':');)
    {
        auto const candidate = std::filesystem::path(dir.empty() ? "." : dir) / program;
        if (::access(candidate.c_str(), X_OK) == 0)
            return parts;
    }
    return std::nullopt;
}

} // namespace structchem
