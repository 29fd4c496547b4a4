// SPDX-License-Identifier: Apache-2.0

#include "structchem/backend.hpp"

#include "structchem/errors.hpp"
#include "structchem/openai_client.hpp"

#include <cstdlib>
#include <fstream>

namespace structchem {

namespace {

using nlohmann::json;

constexpr std::array<RoleKind, 3> all_roles{RoleKind::generator, RoleKind::reviewer, RoleKind::finalizer};

RoleConfig parse_role(json const& entry, std::string const& name, EnvLookup const& env)
{
    if (!entry.is_object())
        throw ConfigError("role '" + name + "' must be an object");

    RoleConfig rc;
    auto& ep = rc.endpoint;
    ep.kind = entry.value("kind", ep.kind);
    ep.base_url = entry.value("base_url", ep.base_url);
    ep.chat_path = entry.value("chat_path", ep.chat_path);
    if (entry.contains("api_key_env"))
        ep.api_key_env = entry["api_key_env"].is_null() ? "" : entry["api_key_env"].get<std::string>();
    ep.oracle_file = entry.value("oracle_file", std::string{});
    ep.timeout_seconds = entry.value("timeout", ep.timeout_seconds);
    rc.temperature = entry.value("temperature", 0.0);
    rc.model_name = entry.value("model", ep.kind == "scripted" ? std::string("scripted") : std::string{});

    if (ep.kind == "scripted")
    {
        if (ep.oracle_file.empty())
            throw ConfigError("role '" + name + "': scripted endpoint needs 'oracle_file'");
        return rc;
    }
    if (ep.kind != "openai")
        throw ConfigError("role '" + name + "': unknown endpoint kind '" + ep.kind + "'");
    if (rc.model_name.empty())
        throw ConfigError("role '" + name + "': 'model' is required");
    if (!ep.api_key_env.empty())
    {
        auto key = env(ep.api_key_env);
        if (!key || key->empty())
            throw ConfigError("role '" + name + "': credential variable " + ep.api_key_env + " is not set");
        rc.api_key = std::move(*key);
    }
    return rc;
}

} // namespace

char const* to_string(RoleKind role)
{
    switch (role)
    {
    case RoleKind::generator: return "generator";
    case RoleKind::reviewer: return "reviewer";
    case RoleKind::finalizer: return "finalizer";
    }
    return "?";
}

RoleKind role_from_string(std::string_view name)
{
    for (auto const r : all_roles)
        if (name == to_string(r))
            return r;
    throw ConfigError("unknown model role '" + std::string(name) + "'");
}

std::string build_chat_request(ModelRole const& role, RenderedPrompt const& prompt)
{
    nlohmann::ordered_json body;
    body["model"] = role.model_name;
    auto messages = nlohmann::ordered_json::array();
    for (auto const& m : prompt.messages)
        messages.push_back({{"role", to_string(m.role)}, {"content", m.text}});
    body["messages"] = std::move(messages);
    body["temperature"] = role.temperature;
    body["stream"] = false;
    return body.dump();
}

// --- ScriptedOracle -------------------------------------------------------

ScriptedOracle::ScriptedOracle(std::vector<std::string> responses)
    : shared_(responses.begin(), responses.end())
{
}

std::shared_ptr<ScriptedOracle> ScriptedOracle::from_json(json const& doc)
{
    auto oracle = std::make_shared<ScriptedOracle>();
    auto read_list = [](json const& list, char const* what) {
        if (!list.is_array())
            throw ConfigError(std::string("oracle: '") + what + "' must be a list of strings");
        std::vector<std::string> out;
        for (auto const& item : list)
        {
            if (!item.is_string())
                throw ConfigError(std::string("oracle: '") + what + "' must be a list of strings");
            out.push_back(item.get<std::string>());
        }
        return out;
    };

    if (doc.is_array())
    {
        for (auto& r : read_list(doc, "responses"))
            oracle->push(std::move(r));
        return oracle;
    }
    if (!doc.is_object())
        throw ConfigError("oracle file must be a list or an object");

    if (doc.contains("responses"))
        for (auto& r : read_list(doc["responses"], "responses"))
            oracle->push(std::move(r));
    if (doc.contains("per_problem"))
        for (auto const& [id, list] : doc["per_problem"].items())
            for (auto& r : read_list(list, "per_problem"))
                oracle->push_for_problem(id, std::move(r));
    if (doc.contains("by_fingerprint"))
        for (auto const& [fp, text] : doc["by_fingerprint"].items())
            oracle->set_for_fingerprint(fp, text.get<std::string>());
    return oracle;
}

std::shared_ptr<ScriptedOracle> ScriptedOracle::from_file(std::filesystem::path const& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open oracle file " + path.string());
    try
    {
        return from_json(json::parse(in));
    }
    catch (json::exception const& e)
    {
        throw ConfigError("oracle file " + path.string() + ": " + e.what());
    }
}

void ScriptedOracle::push(std::string response)
{
    std::lock_guard lock(mutex_);
    shared_.push_back(std::move(response));
}

void ScriptedOracle::push_for_problem(std::string const& problem_id, std::string response)
{
    std::lock_guard lock(mutex_);
    per_problem_[problem_id].push_back(std::move(response));
}

void ScriptedOracle::set_for_fingerprint(std::string const& fingerprint, std::string response)
{
    std::lock_guard lock(mutex_);
    by_fingerprint_[fingerprint] = std::move(response);
}

Completion ScriptedOracle::complete(ModelRole const& role, RenderedPrompt const& prompt)
{
    std::lock_guard lock(mutex_);
    seen_.push_back(prompt);

    Completion c;
    c.role_used = role;
    if (auto const it = by_fingerprint_.find(prompt.fingerprint()); it != by_fingerprint_.end())
    {
        c.text = it->second;
        return c;
    }
    if (auto const it = per_problem_.find(prompt.problem_id); it != per_problem_.end() && !it->second.empty())
    {
        c.text = std::move(it->second.front());
        it->second.pop_front();
        return c;
    }
    if (!shared_.empty())
    {
        c.text = std::move(shared_.front());
        shared_.pop_front();
        return c;
    }
    throw OracleExhaustedError("scripted oracle has no response left for call " + std::to_string(seen_.size()) +
                               " (problem '" + prompt.problem_id + "', " + to_string(prompt.method) + ")");
}

std::size_t ScriptedOracle::calls() const
{
    std::lock_guard lock(mutex_);
    return seen_.size();
}

std::size_t ScriptedOracle::remaining() const
{
    std::lock_guard lock(mutex_);
    auto n = shared_.size();
    for (auto const& [id, q] : per_problem_)
        n += q.size();
    return n;
}

std::vector<RenderedPrompt> ScriptedOracle::prompts() const
{
    std::lock_guard lock(mutex_);
    return seen_;
}

// --- ConcurrencyLimiter ---------------------------------------------------

InFlightLimit::InFlightLimit(std::ptrdiff_t limit)
    : slots_(std::clamp<std::ptrdiff_t>(limit, 1, max_limit))
{
}

ConcurrencyLimiter::ConcurrencyLimiter(std::shared_ptr<ChatBackend> inner, std::shared_ptr<InFlightLimit> limit)
    : inner_(std::move(inner))
    , limit_(std::move(limit))
{
}

ConcurrencyLimiter::ConcurrencyLimiter(std::shared_ptr<ChatBackend> inner, std::ptrdiff_t limit)
    : ConcurrencyLimiter(std::move(inner), std::make_shared<InFlightLimit>(limit))
{
}

Completion ConcurrencyLimiter::complete(ModelRole const& role, RenderedPrompt const& prompt)
{
    limit_->acquire();
    struct Release
    {
        InFlightLimit& limit;
        ~Release() { limit.release(); }
    } release{*limit_};
    return inner_->complete(role, prompt);
}

// --- roles ----------------------------------------------------------------

std::optional<std::string> process_env(std::string const& name)
{
    if (char const* value = std::getenv(name.c_str()))
        return std::string(value);
    return std::nullopt;
}

ModelRole RoleTable::model_role(RoleKind role) const
{
    auto const& rc = roles.at(role);
    return {role, rc.model_name, rc.temperature};
}

RoleTable configure_roles(json const& config, EnvLookup const& env)
{
    if (!config.is_object())
        throw ConfigError("role configuration must be an object");

    RoleTable table;
    bool const per_role = std::any_of(all_roles.begin(), all_roles.end(),
                                      [&](RoleKind r) { return config.contains(to_string(r)); });
    if (!per_role)
    {
        auto const rc = parse_role(config, "default", env);
        for (auto const r : all_roles)
            table.roles[r] = rc;
        return table;
    }

    std::map<RoleKind, RoleConfig> given;
    for (auto const r : all_roles)
        if (config.contains(to_string(r)))
            given[r] = parse_role(config[to_string(r)], to_string(r), env);

    if (given.size() == 1)
    {
        for (auto const r : all_roles)
            table.roles[r] = given.begin()->second;
        return table;
    }
    if (!given.contains(RoleKind::generator))
        throw ConfigError("role configuration names several roles but no generator");
    for (auto const r : all_roles)
        table.roles[r] = given.contains(r) ? given.at(r) : given.at(RoleKind::generator);
    return table;
}

Completion RoleBackends::complete(RoleKind role, RenderedPrompt const& prompt) const
{
    return backends.at(role)->complete(roles.at(role), prompt);
}

RoleBackends make_backends(RoleTable const& table, std::ptrdiff_t max_in_flight)
{
    RoleBackends out;
    std::vector<std::pair<RoleConfig, std::shared_ptr<ChatBackend>>> built;

    for (auto const& [role, rc] : table.roles)
    {
        out.roles[role] = table.model_role(role);
        std::shared_ptr<ChatBackend> backend;
        for (auto const& [seen, b] : built)
            if (seen.endpoint == rc.endpoint && seen.api_key == rc.api_key)
                backend = b;
        if (!backend)
        {
            if (rc.endpoint.kind == "scripted")
            {
                backend = ScriptedOracle::from_file(rc.endpoint.oracle_file);
            }
            else
            {
                OpenAIChatClient::Options options;
                options.chat_path = rc.endpoint.chat_path;
                options.timeout = std::chrono::milliseconds(static_cast<long>(rc.endpoint.timeout_seconds * 1000));
                backend = std::make_shared<OpenAIChatClient>(rc.endpoint.base_url, rc.api_key, options);
            }
            built.emplace_back(rc, backend);
        }
        out.backends[role] = backend;
    }

    auto const limit = std::make_shared<InFlightLimit>(max_in_flight);
    std::map<ChatBackend*, std::shared_ptr<ChatBackend>> limited;
    for (auto& [role, backend] : out.backends)
    {
        auto& wrapped = limited[backend.get()];
        if (!wrapped)
            wrapped = std::make_shared<ConcurrencyLimiter>(backend, limit);
        backend = wrapped;
    }
    return out;
}

RoleBackends single_backend(std::shared_ptr<ChatBackend> backend, std::string model_name)
{
    RoleBackends out;
    for (auto const r : all_roles)
    {
        out.roles[r] = {r, model_name, 0.0};
        out.backends[r] = backend;
    }
    return out;
}

} // namespace structchem
