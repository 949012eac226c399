#pragma once

// Live model client speaking the pipeline's HTTP contract:
//   POST <url>  {"prompt", "system_prompt", "max_tokens", "seed"}  ->  {"text"}
// The API key is read from the environment variable named in the endpoint
// config and sent as a bearer token. It is never logged.

#include <cstdlib>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "vtrace/errors.hpp"
#include "vtrace/pipeline/client.hpp"

namespace vtrace::pipeline {

struct EndpointConfig {
    std::string id;           // recorded in provenance
    std::string url;          // scheme://host[:port]/path
    std::string api_key_env;  // empty: no Authorization header
    int timeout_seconds = 120;
    int max_tokens = 2048;
};

class HttpClient final : public ModelClient {
public:
    explicit HttpClient(EndpointConfig cfg) : cfg_(std::move(cfg)) {
        const auto scheme_end = cfg_.url.find("://");
        if (scheme_end == std::string::npos)
            throw InvalidConfig("endpoint url '" + cfg_.url + "' has no scheme");
        const auto path_start = cfg_.url.find('/', scheme_end + 3);
        base_ = cfg_.url.substr(0, path_start);
        path_ = path_start == std::string::npos ? "/" : cfg_.url.substr(path_start);
    }

    std::string complete(const CompletionRequest& request) override {
        httplib::Client cli(base_);
        if (!cli.is_valid()) throw ClientTransport("cannot create HTTP client for '" + base_ + "'");
        cli.set_connection_timeout(cfg_.timeout_seconds, 0);
        cli.set_read_timeout(cfg_.timeout_seconds, 0);
        cli.set_write_timeout(cfg_.timeout_seconds, 0);

        httplib::Headers headers;
        if (!cfg_.api_key_env.empty()) {
            const char* key = std::getenv(cfg_.api_key_env.c_str());
            if (!key || !*key)
                throw ClientTransport("environment variable " + cfg_.api_key_env + " is not set");
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }

        const nlohmann::ordered_json body = {
            {"prompt", request.prompt},
            {"system_prompt", request.system_prompt},
            {"max_tokens", request.max_tokens > 0 ? request.max_tokens : cfg_.max_tokens},
            {"seed", request.seed},
        };
        auto res = cli.Post(path_, headers, body.dump(), "application/json");
        if (!res) {
            throw ClientTransport(id() + ": request failed (" + httplib::to_string(res.error()) + ")");
        }
        if (res->status < 200 || res->status >= 300) {
            throw ClientTransport(id() + ": HTTP status " + std::to_string(res->status));
        }
        try {
            const auto j = nlohmann::json::parse(res->body);
            return j.at("text").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw ClientTransport(id() + ": response is not a JSON object with a 'text' string");
        }
    }

    std::string id() const override { return cfg_.id.empty() ? cfg_.url : cfg_.id; }

private:
    EndpointConfig cfg_;
    std::string base_;
    std::string path_;
};

}  // namespace vtrace::pipeline
