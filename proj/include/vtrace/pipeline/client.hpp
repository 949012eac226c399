#pragma once

// External-model clients used by the data-synthesis pipeline. A client takes
// a plain-text prompt and returns plain text; callers do the structured
// extraction. MockScript serves canned replies keyed by request fingerprint
// so pipeline runs are reproducible offline.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "vtrace/errors.hpp"

namespace vtrace::pipeline {

enum class ClientRole { question_generator, caption_generator, trace_synthesizer, verifier };

inline std::string_view to_string(ClientRole r) noexcept {
    switch (r) {
        case ClientRole::question_generator: return "question_generator";
        case ClientRole::caption_generator: return "caption_generator";
        case ClientRole::trace_synthesizer: return "trace_synthesizer";
        case ClientRole::verifier: return "verifier";
    }
    return "unknown";
}

inline std::optional<ClientRole> role_from_string(std::string_view s) noexcept {
    for (auto r : {ClientRole::question_generator, ClientRole::caption_generator,
                   ClientRole::trace_synthesizer, ClientRole::verifier})
        if (to_string(r) == s) return r;
    return std::nullopt;
}

struct CompletionRequest {
    ClientRole role = ClientRole::verifier;
    std::string system_prompt;
    std::string prompt;
    int max_tokens = 0;  // 0: the endpoint default
    // sampling seed; regeneration after a failed verification changes it
    std::uint64_t seed = 0;
};

class ModelClient {
public:
    virtual ~ModelClient() = default;
    /// Throws ClientTransport when no completion could be obtained.
    virtual std::string complete(const CompletionRequest& request) = 0;
    virtual std::string id() const = 0;
};

/// 64-bit FNV-1a of "<role>\n<prompt>", as 16 lowercase hex digits.
inline std::string request_fingerprint(ClientRole role, std::string_view prompt) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto feed = [&h](std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
    };
    feed(to_string(role));
    feed("\n");
    feed(prompt);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
        h >>= 4;
    }
    return out;
}

struct ScriptedReply {
    std::string text;
    std::optional<std::string> transport_error;
};

// One rule of a mock script. Replies are served in order; the last one
// repeats once the list is exhausted.
struct ScriptRule {
    std::optional<ClientRole> role;
    std::optional<std::string> fingerprint;
    std::optional<std::string> contains;
    std::vector<ScriptedReply> replies;
    std::size_t cursor = 0;
};

/// Shared state behind MockClient. Lookup order: exact fingerprint, then the
/// first rule whose `contains` text occurs in the prompt, then the first
/// role-wide default rule.
class MockScript {
public:
    MockScript() = default;

    void add_rule(ScriptRule rule) {
        std::lock_guard lock(mu_);
        rules_.push_back(std::move(rule));
    }

    void set_client_id(ClientRole role, std::string id) {
        std::lock_guard lock(mu_);
        ids_[static_cast<std::size_t>(role)] = std::move(id);
    }

    std::string client_id(ClientRole role) const {
        std::lock_guard lock(mu_);
        const auto& id = ids_[static_cast<std::size_t>(role)];
        return id.empty() ? "mock-" + std::string(to_string(role)) : id;
    }

    std::string reply(const CompletionRequest& req) {
        std::lock_guard lock(mu_);
        ++calls_;
        ScriptRule* rule = find(req);
        if (!rule || rule->replies.empty()) {
            throw ClientTransport("mock: no scripted reply for " + std::string(to_string(req.role)) +
                                  " request " + request_fingerprint(req.role, req.prompt));
        }
        const auto idx = std::min(rule->cursor, rule->replies.size() - 1);
        ++rule->cursor;
        const auto& r = rule->replies[idx];
        if (r.transport_error) throw ClientTransport("mock: " + *r.transport_error);
        return r.text;
    }

    std::size_t calls() const {
        std::lock_guard lock(mu_);
        return calls_;
    }

    /// Script file layout:
    ///   {"clients": {"verifier": "id", ...},
    ///    "rules": [{"role": "...", "fingerprint"|"contains": "...",
    ///               "replies": ["text", {"transport_error": "msg"}, ...]}]}
    static std::shared_ptr<MockScript> from_json(const nlohmann::json& j) {
        auto script = std::make_shared<MockScript>();
        if (!j.is_object()) throw SchemaViolation("mock script must be a JSON object");
        if (const auto it = j.find("clients"); it != j.end()) {
            for (const auto& [name, id] : it->items()) {
                const auto role = role_from_string(name);
                if (!role) throw SchemaViolation("mock script: unknown client role '" + name + "'");
                script->set_client_id(*role, id.get<std::string>());
            }
        }
        const auto rules = j.find("rules");
        if (rules == j.end() || !rules->is_array())
            throw SchemaViolation("mock script: missing 'rules' array");
        std::size_t n = 0;
        for (const auto& r : *rules) {
            ++n;
            ScriptRule rule;
            const auto where = "mock script rule " + std::to_string(n) + ": ";
            if (r.contains("role")) {
                rule.role = role_from_string(r.at("role").get<std::string>());
                if (!rule.role) throw SchemaViolation(where + "unknown role");
            }
            if (r.contains("fingerprint")) rule.fingerprint = r.at("fingerprint").get<std::string>();
            if (r.contains("contains")) rule.contains = r.at("contains").get<std::string>();
            if (!r.contains("replies") || !r.at("replies").is_array())
                throw SchemaViolation(where + "missing 'replies' array");
            for (const auto& rep : r.at("replies")) {
                if (rep.is_string()) {
                    rule.replies.push_back({rep.get<std::string>(), std::nullopt});
                } else if (rep.is_object() && rep.contains("transport_error")) {
                    rule.replies.push_back({{}, rep.at("transport_error").get<std::string>()});
                } else {
                    throw SchemaViolation(where + "reply must be a string or {transport_error}");
                }
            }
            script->add_rule(std::move(rule));
        }
        return script;
    }

    static std::shared_ptr<MockScript> from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoFailure("cannot open mock script '" + path + "'");
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw SchemaViolation("mock script '" + path + "': " + e.what());
        }
        return from_json(j);
    }

private:
    ScriptRule* find(const CompletionRequest& req) {
        const auto fp = request_fingerprint(req.role, req.prompt);
        auto role_ok = [&](const ScriptRule& r) { return !r.role || *r.role == req.role; };
        for (auto& r : rules_)
            if (r.fingerprint && *r.fingerprint == fp && role_ok(r)) return &r;
        for (auto& r : rules_)
            if (r.contains && role_ok(r) && req.prompt.find(*r.contains) != std::string::npos)
                return &r;
        for (auto& r : rules_)
            if (!r.fingerprint && !r.contains && r.role && *r.role == req.role) return &r;
        return nullptr;
    }

    mutable std::mutex mu_;
    std::vector<ScriptRule> rules_;
    std::array<std::string, 4> ids_{};
    std::size_t calls_ = 0;
};

class MockClient final : public ModelClient {
public:
    MockClient(std::shared_ptr<MockScript> script, ClientRole role)
        : script_(std::move(script)), role_(role) {}

    std::string complete(const CompletionRequest& request) override {
        auto req = request;
        req.role = role_;
        return script_->reply(req);
    }
    std::string id() const override { return script_->client_id(role_); }

private:
    std::shared_ptr<MockScript> script_;
    ClientRole role_;
};

/// Client backed by a function; handy in tests.
class FunctionClient final : public ModelClient {
public:
    using Fn = std::function<std::string(const CompletionRequest&)>;
    FunctionClient(std::string id, Fn fn) : id_(std::move(id)), fn_(std::move(fn)) {}
    std::string complete(const CompletionRequest& request) override { return fn_(request); }
    std::string id() const override { return id_; }

private:
    std::string id_;
    Fn fn_;
};

struct RetryPolicy {
    int retries = 2;  // extra tries after the first failure
    std::chrono::milliseconds base_delay{250};
};

/// Retries transport failures with exponential backoff (base, 2*base, ...).
class RetryingClient final : public ModelClient {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    RetryingClient(ModelClient& inner, RetryPolicy policy,
                   Sleeper sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
        : inner_(inner), policy_(policy), sleep_(std::move(sleeper)) {}

    std::string complete(const CompletionRequest& request) override {
        for (int attempt = 0;; ++attempt) {
            try {
                return inner_.complete(request);
            } catch (const ClientTransport&) {
                if (attempt >= policy_.retries) throw;
                if (policy_.base_delay.count() > 0) sleep_(policy_.base_delay * (1 << attempt));
            }
        }
    }
    std::string id() const override { return inner_.id(); }

private:
    ModelClient& inner_;
    RetryPolicy policy_;
    Sleeper sleep_;
};

}  // namespace vtrace::pipeline
