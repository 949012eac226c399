#pragma once

// Run configuration shared by the CLI subcommands, read from a JSON file.
// Secrets never live in the file: endpoints name the environment variable
// that holds their API key.
//
// {
//   "grpo":     {"epsilon": 0.2, "beta": 0.04, "ratio_level": "token"},
//   "rewards":  {"format_reward_mode": "graded", "std_epsilon": 1e-8},
//   "metrics":  {"rouge_beta": 1.2,
//                "meteor": {"recall_weight": 9, "gamma": 0.5, "exponent": 3}},
//   "pipeline": {"quotas": {"ActivityNet": 10, ...}, "worker_count": 4,
//                "transport_retries": 2, "backoff_ms": 250,
//                "min_frames": 64, "max_attempts": 3,
//                "clients": {"verifier": {"id": "...", "url": "...",
//                                         "api_key_env": "...", "timeout_seconds": 120,
//                                         "max_tokens": 2048}, ...}}
// }

#include <fstream>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "vtrace/errors.hpp"
#include "vtrace/grpo.hpp"
#include "vtrace/metrics.hpp"
#include "vtrace/pipeline/client.hpp"
#include "vtrace/pipeline/http_client.hpp"
#include "vtrace/pipeline/runner.hpp"
#include "vtrace/rewards.hpp"

namespace vtrace {

struct CliConfig {
    GrpoConfig grpo;
    RewardConfig rewards;
    MetricsConfig metrics;
    pipeline::PipelineConfig pipeline;
    std::map<pipeline::ClientRole, pipeline::EndpointConfig> endpoints;

    void validate() const {
        grpo.validate();
        if (!(rewards.std_epsilon >= 0.0)) throw InvalidConfig("rewards.std_epsilon must be >= 0");
        if (!(metrics.rouge_beta > 0.0)) throw InvalidConfig("metrics.rouge_beta must be > 0");
        if (pipeline.max_attempts < 1 || pipeline.max_attempts > pipeline::kMaxCurationAttempts)
            throw InvalidConfig("pipeline.max_attempts must lie in 1..3");
        if (pipeline.retry.retries < 0) throw InvalidConfig("pipeline.transport_retries must be >= 0");
    }
};

namespace config_detail {

template <class T>
void read(const nlohmann::json& j, const char* key, T& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw InvalidConfig(std::string("config field '") + key + "' has the wrong type");
    }
}

}  // namespace config_detail

inline CliConfig config_from_json(const nlohmann::json& j) {
    using config_detail::read;
    CliConfig c;
    if (!j.is_object()) throw InvalidConfig("config must be a JSON object");

    if (j.contains("grpo")) {
        const auto& g = j["grpo"];
        read(g, "epsilon", c.grpo.epsilon);
        read(g, "beta", c.grpo.beta);
        std::string level = "token";
        read(g, "ratio_level", level);
        if (level == "token") c.grpo.ratio_level = RatioLevel::token;
        else if (level == "sequence") c.grpo.ratio_level = RatioLevel::sequence;
        else throw InvalidConfig("grpo.ratio_level must be 'token' or 'sequence'");
    }
    if (j.contains("rewards")) {
        const auto& r = j["rewards"];
        std::string mode = "graded";
        read(r, "format_reward_mode", mode);
        if (mode == "graded") c.rewards.format_mode = FormatRewardMode::graded;
        else if (mode == "binary") c.rewards.format_mode = FormatRewardMode::binary;
        else throw InvalidConfig("rewards.format_reward_mode must be 'graded' or 'binary'");
        read(r, "std_epsilon", c.rewards.std_epsilon);
    }
    if (j.contains("metrics")) {
        const auto& m = j["metrics"];
        read(m, "rouge_beta", c.metrics.rouge_beta);
        if (m.contains("meteor")) {
            const auto& mt = m["meteor"];
            read(mt, "recall_weight", c.metrics.meteor.recall_weight);
            read(mt, "gamma", c.metrics.meteor.gamma);
            read(mt, "exponent", c.metrics.meteor.exponent);
        }
    }
    if (j.contains("pipeline")) {
        const auto& p = j["pipeline"];
        read(p, "worker_count", c.pipeline.worker_count);
        read(p, "transport_retries", c.pipeline.retry.retries);
        int backoff = static_cast<int>(c.pipeline.retry.base_delay.count());
        read(p, "backoff_ms", backoff);
        c.pipeline.retry.base_delay = std::chrono::milliseconds(backoff);
        read(p, "min_frames", c.pipeline.min_frames);
        read(p, "max_attempts", c.pipeline.max_attempts);
        if (p.contains("quotas")) {
            for (const auto& [name, n] : p["quotas"].items()) {
                const auto src = pipeline::source_from_string(name);
                if (!src) throw InvalidConfig("unknown source dataset in quotas: '" + name + "'");
                if (!n.is_number_unsigned()) throw InvalidConfig("quota for " + name + " must be >= 0");
                c.pipeline.quotas[*src] = n.get<std::size_t>();
            }
        }
        if (p.contains("clients")) {
            for (const auto& [name, e] : p["clients"].items()) {
                const auto role = pipeline::role_from_string(name);
                if (!role) throw InvalidConfig("unknown client role '" + name + "'");
                pipeline::EndpointConfig ep;
                read(e, "id", ep.id);
                read(e, "url", ep.url);
                read(e, "api_key_env", ep.api_key_env);
                read(e, "timeout_seconds", ep.timeout_seconds);
                read(e, "max_tokens", ep.max_tokens);
                c.endpoints[*role] = ep;
            }
        }
    }
    c.validate();
    return c;
}

inline CliConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig("config '" + path + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

}  // namespace vtrace
