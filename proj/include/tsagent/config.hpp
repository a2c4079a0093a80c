#pragma once

// Operator configuration: one JSON document with fixed sections. Unknown keys
// are rejected. API keys come only from the environment.

#include <cstdlib>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tsagent/agent.hpp"
#include "tsagent/corpus.hpp"
#include "tsagent/error.hpp"
#include "tsagent/gateway.hpp"
#include "tsagent/json.hpp"
#include "tsagent/metrics.hpp"
#include "tsagent/reward.hpp"

namespace tsagent {

struct EndpointConfig {
    std::string url;
    std::string model = "default";
    std::string api_key_env = "TSAGENT_API_KEY";
    double timeout_s = 120.0;
    int max_attempts = 3;
    int max_connections = 4;

    HttpClientConfig http() const {
        require(!url.empty(), ErrorCode::BadConfig, "no endpoint url configured (or pass --replay)");
        HttpClientConfig c;
        c.endpoint = url;
        if (const char* key = std::getenv(api_key_env.c_str())) c.api_key = key;
        c.timeout_s = timeout_s;
        c.max_attempts = max_attempts;
        c.max_connections = max_connections;
        return c;
    }
};

struct AppConfig {
    EndpointConfig agent;
    EndpointConfig judge;  // url falls back to the agent's
    std::optional<long long> judge_max_tokens;
    RolloutConfig rollout;
    WindowBudgetConfig windowing;
    double mask_fraction = 0.30;
    long long mask_seed = 0;
    int max_retries = 3;
    QuantileLevels quantiles;
    double gamma = 1.0;
    int group_size = 8;
    HeadSelection heads = HeadSelection::Both;
    std::size_t season = 1;
    Averaging averaging = Averaging::Micro;
    int workers = 1;

    JudgeConfig judge_config() const { return {judge.model, 0.0, judge_max_tokens}; }

    RewardConfig reward_config() const { return {quantiles, heads, gamma, workers}; }

    PipelineConfig pipeline_config() const { return {rollout, judge_config(), max_retries, workers}; }

    void validate() const {
        rollout.validate();
        windowing.validate();
        quantiles.validate();
        require(mask_fraction >= 0.0 && mask_fraction <= 1.0, ErrorCode::BadConfig, "mask_fraction must lie in [0, 1]");
        require(max_retries >= 0, ErrorCode::BadConfig, "max_retries must be >= 0");
        require(gamma >= 0.0 && gamma <= 1.0, ErrorCode::BadConfig, "gamma must lie in [0, 1]");
        require(group_size >= 1, ErrorCode::BadConfig, "group_size must be >= 1");
        require(season >= 1, ErrorCode::BadConfig, "season must be >= 1");
        require(workers >= 1, ErrorCode::BadConfig, "workers must be >= 1");
        for (const auto* e : {&agent, &judge}) {
            require(e->max_attempts >= 1, ErrorCode::BadConfig, "max_attempts must be >= 1");
            require(e->max_connections >= 1 && e->max_connections <= 256, ErrorCode::BadConfig,
                    "max_connections must lie in [1, 256]");
            require(e->timeout_s > 0, ErrorCode::BadConfig, "timeout_s must be positive");
        }
    }

    static AppConfig from_json(const Json& j);

    static AppConfig load(const std::string& path) {
        try {
            return from_json(read_json_file(path));
        } catch (const Error& e) {
            if (e.code() == ErrorCode::Io) throw;
            fail(ErrorCode::BadConfig, path + ": " + e.what());
        }
    }
};

namespace detail {

// Reads known keys from one section and rejects the rest.
class Section {
public:
    Section(const Json& j, std::string name) : j_(j), name_(std::move(name)) {
        require(j_.is_object(), ErrorCode::BadConfig, where() + " must be an object");
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            require(seen_.count(k), ErrorCode::BadConfig, "unknown key '" + prefix() + k + "'");
    }

    template <class T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_[key].get<T>();
        } catch (const Json::exception&) {
            fail(ErrorCode::BadConfig, "wrong type for '" + prefix() + key + "'");
        }
    }

    template <class T>
    void get_optional(const std::string& key, std::optional<T>& out) {
        seen_.insert(key);
        if (!j_.contains(key) || j_[key].is_null()) return;
        T v{};
        get(key, v);
        out = v;
    }

    Section sub(const std::string& key) {
        seen_.insert(key);
        return Section(j_.contains(key) ? j_[key] : empty(), prefix() + key);
    }

    bool has(const std::string& key) const { return j_.contains(key); }

private:
    static const Json& empty() {
        static const Json e = Json::object();
        return e;
    }
    std::string prefix() const { return name_.empty() ? "" : name_ + "."; }
    std::string where() const { return name_.empty() ? "config" : "'" + name_ + "'"; }

    const Json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

inline void read_endpoint(Section& s, EndpointConfig& e) {
    s.get("url", e.url);
    s.get("model", e.model);
    s.get("api_key_env", e.api_key_env);
    s.get("timeout_s", e.timeout_s);
    s.get("max_attempts", e.max_attempts);
    s.get("max_connections", e.max_connections);
}

}  // namespace detail

inline AppConfig AppConfig::from_json(const Json& j) {
    AppConfig c;
    {
        detail::Section root(j, "");
        {
            auto s = root.sub("endpoint");
            detail::read_endpoint(s, c.agent);
            s.finish();
        }
        c.judge = c.agent;
        c.judge.url.clear();
        {
            auto s = root.sub("judge");
            detail::read_endpoint(s, c.judge);
            s.get_optional("max_tokens", c.judge_max_tokens);
            s.finish();
        }
        if (c.judge.url.empty()) c.judge.url = c.agent.url;
        {
            auto s = root.sub("rollout");
            s.get("max_assistant_turns", c.rollout.max_assistant_turns);
            s.get("max_parallel_calls", c.rollout.max_parallel_calls);
            s.get("temperature", c.rollout.temperature);
            s.get_optional("seed", c.rollout.seed);
            s.get_optional("max_tokens", c.rollout.max_tokens);
            s.finish();
        }
        c.rollout.model = c.agent.model;
        {
            auto s = root.sub("windowing");
            s.get("history_length", c.windowing.L);
            s.get("horizon_short", c.windowing.H_s);
            s.get("horizon_long", c.windowing.H_l);
            s.get("stride", c.windowing.d);
            s.get("max_windows", c.windowing.B_max);
            s.get("min_windows", c.windowing.B_min);
            s.get("fallback_strides", c.windowing.fallback_strides);
            s.get("mask_fraction", c.mask_fraction);
            s.get("mask_seed", c.mask_seed);
            s.finish();
        }
        {
            auto s = root.sub("qc");
            s.get("max_retries", c.max_retries);
            s.finish();
        }
        {
            auto s = root.sub("reward");
            s.get("quantiles", c.quantiles.q);
            s.get("gamma", c.gamma);
            s.get("group_size", c.group_size);
            std::string heads = "both";
            s.get("heads", heads);
            c.heads = head_selection_from_string(heads);
            s.finish();
        }
        {
            auto s = root.sub("eval");
            std::string avg = "micro";
            s.get("averaging", avg);
            require(avg == "micro" || avg == "macro", ErrorCode::BadConfig, "eval.averaging must be micro or macro");
            c.averaging = avg == "micro" ? Averaging::Micro : Averaging::Macro;
            s.finish();
        }
        root.get("season", c.season);
        root.get("workers", c.workers);
        root.finish();
    }
    try {
        c.validate();
    } catch (const Error& e) {
        if (e.code() == ErrorCode::BadConfig) throw;
        fail(ErrorCode::BadConfig, e.what());
    }
    return c;
}

}  // namespace tsagent
