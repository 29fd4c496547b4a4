// SPDX-License-Identifier: Apache-2.0

// Client side of the script-execution boundary used by the pot_code method.
// The runner is a separate executable:
//
//   <runner> --source <file> --timeout <secs>
//
// which prints exactly one JSON result record on stdout. See
// docs/sandbox_protocol.md for the record schema.

#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace structchem {

struct SandboxResult
{
    std::string stdout_text;
    std::string stderr_text;
    bool exit_ok = false;
    bool timed_out = false;
    double elapsed_seconds = 0.0;
    std::optional<double> extracted_value;
};

/// Parses one result record. Throws SandboxError on a malformed record.
SandboxResult parse_sandbox_record(std::string_view line);
nlohmann::ordered_json to_json(SandboxResult const& result);

class Sandbox
{
public:
    virtual ~Sandbox() = default;
    virtual SandboxResult execute(std::string const& source, std::chrono::duration<double> timeout) = 0;
};

inline constexpr std::chrono::seconds default_sandbox_timeout{20};

/// Spawns the runner once per execution. `command` is the runner argv prefix,
/// e.g. {"python3", "-m", "pot_sandbox"}; --source and --timeout are appended.
/// The source goes to a private temp file that is removed afterwards.
class SubprocessSandbox : public Sandbox
{
public:
    explicit SubprocessSandbox(std::vector<std::string> command,
                               std::chrono::duration<double> grace = std::chrono::seconds(5));

    /// Throws SandboxError("sandbox unavailable: ...") when the runner cannot
    /// be started, dies without a record, or overruns timeout + grace.
    SandboxResult execute(std::string const& source, std::chrono::duration<double> timeout) override;

    [[nodiscard]] std::vector<std::string> const& command() const { return command_; }

private:
    std::vector<std::string> command_;
    std::chrono::duration<double> grace_;
};

/// Splits a runner command line on whitespace. Returns nullopt when the
/// program is neither an existing path nor found on PATH.
std::optional<std::vector<std::string>> resolve_sandbox_command(std::string const& command_line);

} // namespace structchem
