// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "structchem/prompts.hpp"

#include <chrono>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace structchem {

enum class RoleKind
{
    generator,
    reviewer,
    finalizer,
};

char const* to_string(RoleKind role);
RoleKind role_from_string(std::string_view name);

struct ModelRole
{
    RoleKind role = RoleKind::generator;
    std::string model_name;
    double temperature = 0.0;
};

struct Usage
{
    long prompt_tokens = 0;
    long completion_tokens = 0;
    long total_tokens = 0;
};

struct Completion
{
    /// Raw model output, unmodified.
    std::string text;
    ModelRole role_used;
    std::optional<Usage> usage;
    std::chrono::milliseconds latency{0};
};

/// Chat-completion backend. Implementations must be safe to call from
/// several threads at once.
class ChatBackend
{
public:
    virtual ~ChatBackend() = default;
    virtual Completion complete(ModelRole const& role, RenderedPrompt const& prompt) = 0;
};

/// OpenAI-style request body for (role, prompt). Pure: equal inputs give
/// byte-equal payloads.
std::string build_chat_request(ModelRole const& role, RenderedPrompt const& prompt);

/// Replays canned completions. Lookup order per call: fingerprint map, then
/// the per-problem queue, then the shared queue. Running dry throws
/// OracleExhaustedError; responses are never recycled.
///
/// File format (JSON), any combination of:
///   ["text", ...]                               shared queue
///   {"responses": ["text", ...],
///    "per_problem": {"<problem id>": ["text", ...]},
///    "by_fingerprint": {"<fingerprint>": "text"}}
class ScriptedOracle : public ChatBackend
{
public:
    ScriptedOracle() = default;
    explicit ScriptedOracle(std::vector<std::string> responses);

    static std::shared_ptr<ScriptedOracle> from_json(nlohmann::json const& doc);
    static std::shared_ptr<ScriptedOracle> from_file(std::filesystem::path const& path);

    void push(std::string response);
    void push_for_problem(std::string const& problem_id, std::string response);
    void set_for_fingerprint(std::string const& fingerprint, std::string response);

    Completion complete(ModelRole const& role, RenderedPrompt const& prompt) override;

    [[nodiscard]] std::size_t calls() const;
    [[nodiscard]] std::size_t remaining() const;
    /// Prompts seen so far, in call order.
    [[nodiscard]] std::vector<RenderedPrompt> prompts() const;

private:
    mutable std::mutex mutex_;
    std::deque<std::string> shared_;
    std::map<std::string, std::deque<std::string>> per_problem_;
    std::map<std::string, std::string> by_fingerprint_;
    std::vector<RenderedPrompt> seen_;
};

/// A counting bound on concurrent requests, shareable between backends.
class InFlightLimit
{
public:
    static constexpr std::ptrdiff_t max_limit = 256;

    explicit InFlightLimit(std::ptrdiff_t limit);

    void acquire() { slots_.acquire(); }
    void release() { slots_.release(); }

private:
    std::counting_semaphore<max_limit> slots_;
};

/// Holds a slot of `limit` for the duration of each call to `inner`.
class ConcurrencyLimiter : public ChatBackend
{
public:
    ConcurrencyLimiter(std::shared_ptr<ChatBackend> inner, std::shared_ptr<InFlightLimit> limit);
    ConcurrencyLimiter(std::shared_ptr<ChatBackend> inner, std::ptrdiff_t limit);

    Completion complete(ModelRole const& role, RenderedPrompt const& prompt) override;

private:
    std::shared_ptr<ChatBackend> inner_;
    std::shared_ptr<InFlightLimit> limit_;
};

struct EndpointConfig
{
    /// "openai" for a live OpenAI-compatible server, "scripted" for an oracle file.
    std::string kind = "openai";
    std::string base_url = "https://api.openai.com/v1";
    std::string chat_path = "/chat/completions";
    /// Environment variable holding the bearer token. Empty: no credential.
    std::string api_key_env = "OPENAI_API_KEY";
    std::filesystem::path oracle_file;
    double timeout_seconds = 120.0;

    bool operator==(EndpointConfig const&) const = default;
};

struct RoleConfig
{
    EndpointConfig endpoint;
    std::string model_name;
    double temperature = 0.0;
    /// Resolved from endpoint.api_key_env at configuration time.
    std::string api_key;
};

/// One entry per role, after aliasing.
struct RoleTable
{
    std::map<RoleKind, RoleConfig> roles;

    [[nodiscard]] ModelRole model_role(RoleKind role) const;
    [[nodiscard]] RoleConfig const& at(RoleKind role) const { return roles.at(role); }
};

using EnvLookup = std::function<std::optional<std::string>(std::string const&)>;

/// Reads the process environment.
std::optional<std::string> process_env(std::string const& name);

/// Accepts either a single role object ({"model": ..., "base_url": ...}),
/// which all three roles alias, or {"generator": {...}, "reviewer": {...},
/// "finalizer": {...}} where missing reviewer/finalizer entries alias the
/// generator. Live endpoints whose credential variable is unset are rejected.
RoleTable configure_roles(nlohmann::json const& config, EnvLookup const& env = process_env);

/// Backend per role; roles with identical endpoints share one client. All
/// clients draw from a single InFlightLimit of `max_in_flight`.
struct RoleBackends
{
    std::map<RoleKind, ModelRole> roles;
    std::map<RoleKind, std::shared_ptr<ChatBackend>> backends;

    Completion complete(RoleKind role, RenderedPrompt const& prompt) const;
};

RoleBackends make_backends(RoleTable const& table, std::ptrdiff_t max_in_flight = 4);

/// All three roles on one backend, named `model_name`, temperature 0.
RoleBackends single_backend(std::shared_ptr<ChatBackend> backend, std::string model_name = "scripted");

} // namespace structchem
