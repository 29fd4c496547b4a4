// SPDX-License-Identifier: Apache-2.0

#include "structchem/openai_client.hpp"

#include "structchem/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace structchem {

namespace {

struct SplitUrl
{
    std::string scheme_host_port;
    std::string path_prefix;
};

SplitUrl split_base_url(std::string const& url)
{
    auto const scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("base URL '" + url + "' has no scheme");
    auto const path_start = url.find('/', scheme_end + 3);
    SplitUrl out;
    out.scheme_host_port = url.substr(0, path_start);
    out.path_prefix = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!out.path_prefix.empty() && out.path_prefix.back() == '/')
        out.path_prefix.pop_back();
    return out;
}

std::string error_code_of(nlohmann::json const& body)
{
    if (body.contains("error") && body["error"].is_object())
    {
        auto const& err = body["error"];
        if (err.contains("code") && err["code"].is_string())
            return err["code"].get<std::string>();
    }
    return {};
}

std::string error_message_of(nlohmann::json const& body, std::string const& raw)
{
    if (body.contains("error") && body["error"].is_object() && body["error"].contains("message") &&
        body["error"]["message"].is_string())
        return body["error"]["message"].get<std::string>();
    return raw.substr(0, 300);
}

} // namespace

std::chrono::milliseconds backoff_delay(RetryPolicy const& policy, int retry, double jitter_draw)
{
    auto const base = static_cast<double>(policy.initial_backoff.count()) * std::pow(policy.multiplier, retry - 1);
    auto const factor = 1.0 + policy.jitter * std::clamp(jitter_draw, -1.0, 1.0);
    return std::chrono::milliseconds(static_cast<long>(std::llround(base * factor)));
}

bool is_retryable_status(int status)
{
    return status == 408 || status == 429 || (status >= 500 && status <= 599);
}

struct OpenAIChatClient::Impl
{
    SplitUrl url;
    std::string api_key;
    Options options;
    std::mutex rng_mutex;
    std::mt19937_64 rng;
    std::atomic<int> attempts{0};

    double jitter_draw()
    {
        std::lock_guard lock(rng_mutex);
        return std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    }

    void sleep(std::chrono::milliseconds d) const
    {
        if (options.sleep)
            options.sleep(d);
        else
            std::this_thread::sleep_for(d);
    }
};

OpenAIChatClient::OpenAIChatClient(std::string base_url, std::string api_key, Options options)
    : impl_(std::make_unique<Impl>())
{
    impl_->url = split_base_url(base_url);
    impl_->api_key = std::move(api_key);
    impl_->options = std::move(options);
    impl_->rng.seed(impl_->options.jitter_seed);
    if (impl_->options.retry.max_attempts < 1)
        impl_->options.retry.max_attempts = 1;
}

OpenAIChatClient::~OpenAIChatClient() = default;

int OpenAIChatClient::attempts_made() const
{
    return impl_->attempts.load();
}

Completion OpenAIChatClient::complete(ModelRole const& role, RenderedPrompt const& prompt)
{
    auto const body = build_chat_request(role, prompt);
    auto const path = impl_->url.path_prefix + impl_->options.chat_path;
    auto const& retry = impl_->options.retry;

    // httplib clients are not thread-safe; one per call keeps this reentrant.
    httplib::Client client(impl_->url.scheme_host_port);
    auto const timeout = impl_->options.timeout;
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                                  (timeout.count() % 1000) * 1000);
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                            (timeout.count() % 1000) * 1000);
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                             (timeout.count() % 1000) * 1000);

    httplib::Headers headers;
    if (!impl_->api_key.empty())
        headers.emplace("Authorization", "Bearer " + impl_->api_key);

    std::string last_failure;
    auto const started = std::chrono::steady_clock::now();
    for (int attempt = 1; attempt <= retry.max_attempts; ++attempt)
    {
        if (attempt > 1)
            impl_->sleep(backoff_delay(retry, attempt - 1, impl_->jitter_draw()));
        ++impl_->attempts;

        auto const res = client.Post(path, headers, body, "application/json");
        if (!res)
        {
            last_failure = "transport error: " + httplib::to_string(res.error());
            continue;
        }

        auto const status = res->status;
        nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
        if (status == 200)
        {
            if (parsed.is_discarded() || !parsed.contains("choices") || !parsed["choices"].is_array() ||
                parsed["choices"].empty())
                throw BackendError("malformed chat-completions response: " + res->body.substr(0, 300));
            auto const& message = parsed["choices"][0]["message"];
            Completion c;
            c.text = message.contains("content") && message["content"].is_string() ? message["content"].get<std::string>()
                                                                                     : std::string{};
            c.role_used = role;
            if (parsed.contains("usage") && parsed["usage"].is_object())
            {
                auto const& u = parsed["usage"];
                c.usage = Usage{u.value("prompt_tokens", 0L), u.value("completion_tokens", 0L), u.value("total_tokens", 0L)};
            }
            c.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
            return c;
        }

        auto const message = parsed.is_discarded() ? res->body.substr(0, 300) : error_message_of(parsed, res->body);
        if (status == 401 || status == 403)
            throw AuthenticationError("authentication failed (HTTP " + std::to_string(status) + "): " + message);
        if (status == 400 || status == 413)
        {
            auto const code = parsed.is_discarded() ? std::string{} : error_code_of(parsed);
            if (code == "context_length_exceeded" || message.find("context length") != std::string::npos ||
                message.find("maximum context") != std::string::npos)
                throw ContextLengthError("context length exceeded: " + message, prompt.total_chars());
        }
        if (!is_retryable_status(status))
            throw BackendError("HTTP " + std::to_string(status) + ": " + message);
        last_failure = "HTTP " + std::to_string(status) + ": " + message;
    }
    throw BackendError("endpoint " + impl_->url.scheme_host_port + path + " unreachable after " +
                       std::to_string(retry.max_attempts) + " attempts; last failure: " + last_failure);
}

} // namespace structchem
