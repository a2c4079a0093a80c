#pragma once

// Chat-completion client abstraction over OpenAI-compatible endpoints, with
// record/replay cassettes for deterministic runs.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#ifdef _res
#undef _res  // <resolv.h> macro collides with Eigen parameter names
#endif
#include <openssl/evp.h>

#include "tsagent/error.hpp"
#include "tsagent/json.hpp"

namespace tsagent {

enum class Role { System, User, Assistant, Tool };

inline std::string_view to_string(Role r) {
    switch (r) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
        case Role::Tool: return "tool";
    }
    return "";
}

inline Role role_from_string(std::string_view s) {
    if (s == "system") return Role::System;
    if (s == "user") return Role::User;
    if (s == "assistant") return Role::Assistant;
    if (s == "tool") return Role::Tool;
    fail(ErrorCode::Schema, "unknown role '" + std::string(s) + "'");
}

/// A function call requested by the assistant. `arguments` keeps the exact text
/// the model produced; it is parsed only when the call is executed.
struct ToolCall {
    std::string id;
    std::string name;
    std::string arguments;

    Json to_json() const {
        return {{"id", id}, {"type", "function"}, {"function", {{"name", name}, {"arguments", arguments}}}};
    }

    static ToolCall from_json(const Json& j) {
        try {
            const auto& fn = j.at("function");
            ToolCall c{j.at("id").get<std::string>(), fn.at("name").get<std::string>(), ""};
            const auto& args = fn.at("arguments");
            c.arguments = args.is_string() ? args.get<std::string>() : args.dump();
            return c;
        } catch (const Json::exception& e) {
            fail(ErrorCode::Schema, std::string("bad tool call: ") + e.what());
        }
    }
};

struct ChatMessage {
    Role role = Role::User;
    std::optional<std::string> content;
    std::vector<ToolCall> tool_calls;  // assistant only
    std::string call_id;               // tool only

    static ChatMessage system(std::string text) { return {Role::System, std::move(text), {}, {}}; }
    static ChatMessage user(std::string text) { return {Role::User, std::move(text), {}, {}}; }
    static ChatMessage tool(std::string id, std::string text) { return {Role::Tool, std::move(text), {}, std::move(id)}; }

    std::string text() const { return content.value_or(""); }

    /// OpenAI wire shape; also the trajectory record shape.
    Json to_json() const {
        Json j = Json::object();
        j["role"] = std::string(to_string(role));
        j["content"] = content ? Json(*content) : Json(nullptr);
        if (!tool_calls.empty()) {
            j["tool_calls"] = Json::array();
            for (const auto& c : tool_calls) j["tool_calls"].push_back(c.to_json());
        }
        if (role == Role::Tool) j["tool_call_id"] = call_id;
        return j;
    }

    static ChatMessage from_json(const Json& j) {
        require(j.is_object(), ErrorCode::Schema, "message must be an object");
        ChatMessage m;
        try {
            m.role = role_from_string(j.at("role").get<std::string>());
            if (j.contains("content") && !j["content"].is_null()) m.content = j["content"].get<std::string>();
            if (j.contains("tool_calls") && !j["tool_calls"].is_null())
                for (const auto& c : j["tool_calls"]) m.tool_calls.push_back(ToolCall::from_json(c));
            if (m.role == Role::Tool) m.call_id = j.at("tool_call_id").get<std::string>();
        } catch (const Json::exception& e) {
            fail(ErrorCode::Schema, std::string("bad message: ") + e.what());
        }
        return m;
    }
};

struct Usage {
    std::optional<long long> prompt_tokens;
    std::optional<long long> completion_tokens;
};

struct CompletionRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    Json tools = Json::array();  // empty: tool calling disabled
    double temperature = 0.0;
    std::optional<long long> max_tokens;
    std::optional<long long> seed;

    Json to_json() const {
        Json j = Json::object();
        j["model"] = model;
        j["messages"] = Json::array();
        for (const auto& m : messages) j["messages"].push_back(m.to_json());
        if (!tools.empty()) j["tools"] = tools;
        j["temperature"] = temperature;
        if (max_tokens) j["max_tokens"] = *max_tokens;
        if (seed) j["seed"] = *seed;
        return j;
    }
};

struct CompletionResponse {
    ChatMessage message;
    std::string finish_reason;
    Usage usage;
    Json raw;  // provider body as received
};

/// Parses an OpenAI-style chat completion body. Anything unexpected is MALFORMED_RESPONSE.
inline CompletionResponse parse_completion(const Json& body) {
    auto bad = [](const std::string& why) { fail(ErrorCode::MalformedResponse, "malformed completion: " + why); };
    if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array() || body["choices"].empty())
        bad("missing choices");
    const Json& choice = body["choices"][0];
    if (!choice.is_object() || !choice.contains("message")) bad("missing message");
    CompletionResponse r;
    try {
        r.message = ChatMessage::from_json(choice["message"]);
    } catch (const Error& e) {
        bad(e.what());
    }
    if (r.message.role != Role::Assistant) bad("message role is not assistant");
    r.finish_reason = choice.value("finish_reason", Json(nullptr)).is_string() ? choice["finish_reason"].get<std::string>() : "";
    if (r.finish_reason != "stop" && r.finish_reason != "tool_calls" && r.finish_reason != "length")
        bad("finish_reason must be stop, tool_calls or length");
    if (body.contains("usage") && body["usage"].is_object()) {
        const auto& u = body["usage"];
        if (u.contains("prompt_tokens") && u["prompt_tokens"].is_number_integer())
            r.usage.prompt_tokens = u["prompt_tokens"].get<long long>();
        if (u.contains("completion_tokens") && u["completion_tokens"].is_number_integer())
            r.usage.completion_tokens = u["completion_tokens"].get<long long>();
    }
    r.raw = body;
    return r;
}

/// Builds a provider-shaped body around an assistant message.
inline Json completion_body(const ChatMessage& message, std::optional<Usage> usage = std::nullopt) {
    const std::string finish = message.tool_calls.empty() ? "stop" : "tool_calls";
    Json body = {{"object", "chat.completion"},
                 {"choices", Json::array({{{"index", 0}, {"message", message.to_json()}, {"finish_reason", finish}}})}};
    if (usage) {
        Json u = Json::object();
        if (usage->prompt_tokens) u["prompt_tokens"] = *usage->prompt_tokens;
        if (usage->completion_tokens) u["completion_tokens"] = *usage->completion_tokens;
        body["usage"] = u;
    }
    return body;
}

inline std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    require(EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) == 1, ErrorCode::Io,
            "sha256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

/// Stable request hash: insensitive to whitespace and key order.
inline std::string fingerprint(const CompletionRequest& req) { return sha256_hex(canonical_dump(req.to_json())); }

class ChatClient {
public:
    virtual ~ChatClient() = default;
    virtual CompletionResponse complete(const CompletionRequest& request) = 0;
};

/// Answers requests from a callable returning provider-shaped bodies.
class FunctionClient : public ChatClient {
public:
    using Handler = std::function<Json(const CompletionRequest&)>;
    explicit FunctionClient(Handler handler) : handler_(std::move(handler)) {}

    CompletionResponse complete(const CompletionRequest& request) override {
        return parse_completion(handler_(request));
    }

private:
    Handler handler_;
};

struct HttpClientConfig {
    std::string endpoint;  // e.g. http://host:8000/v1
    std::string api_key;
    double timeout_s = 120.0;
    int max_attempts = 3;
    std::chrono::milliseconds backoff{500};
    int max_connections = 4;
    std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
        std::this_thread::sleep_for(d);
    };

    /// Endpoint and key from the environment; the key variable name is configurable.
    static HttpClientConfig from_env(const std::string& endpoint_var = "TSAGENT_ENDPOINT",
                                     const std::string& key_var = "TSAGENT_API_KEY") {
        HttpClientConfig c;
        if (const char* e = std::getenv(endpoint_var.c_str())) c.endpoint = e;
        if (const char* k = std::getenv(key_var.c_str())) c.api_key = k;
        return c;
    }
};

namespace detail {

struct UrlParts {
    std::string origin;  // scheme://host:port
    std::string path;
};

inline UrlParts split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    require(scheme_end != std::string::npos, ErrorCode::BadConfig, "endpoint must start with http:// or https://");
    const auto path_start = url.find('/', scheme_end + 3);
    UrlParts p;
    p.origin = url.substr(0, path_start);
    p.path = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!p.path.empty() && p.path.back() == '/') p.path.pop_back();
    return p;
}

}  // namespace detail

/// Live client. Retries transient failures (connection errors, 429, 5xx) with
/// exponential backoff; malformed bodies and other statuses fail immediately.
class HttpChatClient : public ChatClient {
public:
    explicit HttpChatClient(HttpClientConfig config)
        : config_(std::move(config)), slots_(std::max(1, config_.max_connections)) {
        require(!config_.endpoint.empty(), ErrorCode::BadConfig, "no chat endpoint configured");
        require(config_.max_attempts >= 1, ErrorCode::BadConfig, "max_attempts must be >= 1");
        url_ = detail::split_url(config_.endpoint);
        if (url_.path.size() < 17 || url_.path.substr(url_.path.size() - 17) != "/chat/completions")
            url_.path += "/chat/completions";
    }

    CompletionResponse complete(const CompletionRequest& request) override {
        const std::string body = request.to_json().dump();
        slots_.acquire();
        struct Release {
            std::counting_semaphore<256>& s;
            ~Release() { s.release(); }
        } release{slots_};

        ErrorCode last = ErrorCode::Transport;
        std::string last_msg;
        for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
            if (attempt > 1) config_.sleep(config_.backoff * (1 << (attempt - 2)));
            httplib::Client cli(url_.origin);
            const auto t = std::chrono::duration<double>(config_.timeout_s);
            cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
            cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
            cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
            httplib::Headers headers;
            if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
            auto res = cli.Post(url_.path, headers, body, "application/json");
            if (!res) {
                last = ErrorCode::Transport;
                last_msg = "request failed: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429) {
                last = ErrorCode::RateLimited;
                last_msg = "rate limited (HTTP 429)";
                continue;
            }
            if (res->status >= 500) {
                last = ErrorCode::Transport;
                last_msg = "server error HTTP " + std::to_string(res->status);
                continue;
            }
            require(res->status == 200, ErrorCode::Transport, "HTTP " + std::to_string(res->status));
            return parse_completion(parse_json(res->body, ErrorCode::MalformedResponse));
        }
        fail(last, last_msg + " after " + std::to_string(config_.max_attempts) + " attempts");
    }

private:
    HttpClientConfig config_;
    detail::UrlParts url_;
    std::counting_semaphore<256> slots_;
};

/// Serves responses from a cassette in order, checking each request fingerprint.
class ReplayClient : public ChatClient {
public:
    explicit ReplayClient(const std::string& path) {
        for (const auto& line : read_jsonl(path)) {
            require(line.is_object() && line.contains("fingerprint") && line.contains("response"), ErrorCode::Parse,
                    path + ": cassette entries need fingerprint and response");
            entries_.push_back({line["fingerprint"].get<std::string>(), line["response"]});
        }
    }

    CompletionResponse complete(const CompletionRequest& request) override {
        std::lock_guard lock(mu_);
        require(next_ < entries_.size(), ErrorCode::CassetteMismatch,
                "cassette exhausted after " + std::to_string(entries_.size()) + " responses");
        const auto& [fp, response] = entries_[next_];
        const std::string want = fingerprint(request);
        require(fp == want, ErrorCode::CassetteMismatch,
                "request " + std::to_string(next_) + " does not match the cassette (" + want.substr(0, 12) +
                    " vs " + fp.substr(0, 12) + ")");
        ++next_;
        return parse_completion(response);
    }

    std::size_t consumed() const { return next_; }
    std::size_t size() const { return entries_.size(); }

private:
    std::vector<std::pair<std::string, Json>> entries_;
    std::size_t next_ = 0;
    std::mutex mu_;
};

/// Forwards to another client and appends every exchange to a cassette file.
class RecordingClient : public ChatClient {
public:
    RecordingClient(ChatClient& inner, const std::string& path) : inner_(inner), out_(path, std::ios::trunc) {
        require(static_cast<bool>(out_), ErrorCode::Io, "cannot write cassette " + path);
    }

    CompletionResponse complete(const CompletionRequest& request) override {
        auto response = inner_.complete(request);
        std::lock_guard lock(mu_);
        Json line = {{"fingerprint", fingerprint(request)}, {"response", response.raw}};
        out_ << line.dump() << '\n';
        out_.flush();
        require(static_cast<bool>(out_), ErrorCode::Io, "cassette write failed");
        return response;
    }

private:
    ChatClient& inner_;
    std::ofstream out_;
    std::mutex mu_;
};

}  // namespace tsagent
