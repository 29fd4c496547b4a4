// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "structchem/backend.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>

namespace structchem {

struct RetryPolicy
{
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};
    double multiplier = 2.0;
    /// Each delay is scaled by a uniform factor in [1 - jitter, 1 + jitter].
    double jitter = 0.25;
};

/// Delay before retry number `retry` (1-based), given a jitter draw in [-1, 1].
std::chrono::milliseconds backoff_delay(RetryPolicy const& policy, int retry, double jitter_draw);

/// True for the statuses worth retrying: 408, 429 and 5xx.
bool is_retryable_status(int status);

/// Chat-completions client for any OpenAI-compatible server.
/// Retries timeouts, connection failures, 429 and 5xx with jittered
/// exponential backoff; other failures surface immediately.
class OpenAIChatClient : public ChatBackend
{
public:
    struct Options
    {
        std::string chat_path = "/chat/completions";
        std::chrono::milliseconds timeout{120000};
        RetryPolicy retry;
        std::uint64_t jitter_seed = 0x5eed;
        /// Replaceable for tests.
        std::function<void(std::chrono::milliseconds)> sleep;
    };

    OpenAIChatClient(std::string base_url, std::string api_key, Options options);
    ~OpenAIChatClient() override;

    Completion complete(ModelRole const& role, RenderedPrompt const& prompt) override;

    [[nodiscard]] int attempts_made() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace structchem
