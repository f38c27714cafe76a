// SPDX-License-Identifier: Apache-2.0
#include "hardgen/llm_gateway.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <thread>

namespace hardgen
{

namespace
{

std::string env_or_empty(const char* name)
{
    const char* value = std::getenv(name);
    return value == nullptr ? std::string() : std::string(value);
}

bool transient_status(int status)
{
    return status == 408 || status == 429 || status >= 500;
}

} // namespace

HttpBackendOptions http_options_from_env()
{
    HttpBackendOptions options;
    options.endpoint = env_or_empty("HARDGEN_ENDPOINT");
    options.api_key = env_or_empty("HARDGEN_API_KEY");
    options.default_model = env_or_empty("HARDGEN_MODEL");
    return options;
}

HttpBackend::HttpBackend(HttpBackendOptions options):
    _options(std::move(options)), _limiter(_options.requests_per_second)
{
    const auto& url = _options.endpoint;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw Error("endpoint must be an http(s) URL: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    _host = url.substr(0, path_start);
    _path = path_start == std::string::npos ? std::string() : url.substr(path_start);
    while (!_path.empty() && _path.back() == '/')
        _path.pop_back();
    _path += "/chat/completions";
}

std::string HttpBackend::complete(const std::vector<ChatMessage>& messages, const CompletionParams& params)
{
    auto effective = params;
    if (effective.model.empty())
        effective.model = _options.default_model;
    const auto body = request_json(messages, effective).dump();

    httplib::Headers headers;
    if (!_options.api_key.empty())
        headers.emplace("Authorization", "Bearer " + _options.api_key);

    auto backoff = _options.initial_backoff;
    std::string last_error;
    for (int attempt = 0; attempt <= _options.max_retries; ++attempt)
    {
        if (attempt > 0)
        {
            std::this_thread::sleep_for(backoff);
            backoff = std::chrono::milliseconds(
                static_cast<std::int64_t>(static_cast<double>(backoff.count()) * _options.backoff_factor));
        }
        _limiter.acquire();

        httplib::Client client(_host);
        client.set_connection_timeout(_options.timeout);
        client.set_read_timeout(_options.timeout);
        client.set_write_timeout(_options.timeout);
        ++_requests_sent;
        auto result = client.Post(_path, headers, body, "application/json");

        if (!result)
        {
            last_error = "connection failed: " + httplib::to_string(result.error());
            continue;
        }
        if (transient_status(result->status))
        {
            last_error = "HTTP " + std::to_string(result->status);
            continue;
        }
        if (result->status != 200)
            throw TransportError("HTTP " + std::to_string(result->status) + ": " + result->body);

        try
        {
            const auto reply = Json::parse(result->body);
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        }
        catch (const Json::exception& e)
        {
            throw TransportError(std::string("malformed completion response: ") + e.what());
        }
    }
    throw TransportError("retry budget exhausted after " + std::to_string(_options.max_retries + 1)
                         + " attempts: " + last_error);
}

} // namespace hardgen
