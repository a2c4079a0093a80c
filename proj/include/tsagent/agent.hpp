#pragma once

// Multi-turn tool-calling rollout for morphology forecasting.

#include <algorithm>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "tsagent/error.hpp"
#include "tsagent/gateway.hpp"
#include "tsagent/json.hpp"
#include "tsagent/prompts.hpp"
#include "tsagent/series.hpp"
#include "tsagent/toolbox/registry.hpp"

namespace tsagent {

inline constexpr std::string_view kUnavailable = "unavailable";

struct RolloutConfig {
    int max_assistant_turns = 8;
    int max_parallel_calls = 3;
    double temperature = 0.0;
    std::optional<long long> seed;
    std::optional<long long> max_tokens;
    std::string model = "default";
    bool require_broad_and_local = false;

    void validate() const {
        require(max_assistant_turns >= 1, ErrorCode::BadConfig, "max_assistant_turns must be >= 1");
        require(max_parallel_calls >= 1, ErrorCode::BadConfig, "max_parallel_calls must be >= 1");
    }
};

struct SampleMetadata {
    std::string dataset{kUnavailable};
    std::string domain{kUnavailable};
    std::string freq{kUnavailable};
    std::string dataset_description{kUnavailable};
    std::string var_name{kUnavailable};
    std::string var_desc{kUnavailable};
    std::string unit{kUnavailable};

    Json to_json() const {
        return {{"dataset", dataset}, {"domain", domain},     {"freq", freq},
                {"dataset_description", dataset_description}, {"var_name", var_name},
                {"var_desc", var_desc},                       {"unit", unit}};
    }

    static SampleMetadata from_json(const Json& j) {
        SampleMetadata m;
        if (!j.is_object()) return m;
        auto get = [&](const char* key, std::string& dst) {
            if (j.contains(key) && j[key].is_string()) dst = j[key].get<std::string>();
        };
        get("dataset", m.dataset);
        get("domain", m.domain);
        get("freq", m.freq);
        get("dataset_description", m.dataset_description);
        get("var_name", m.var_name);
        get("var_desc", m.var_desc);
        get("unit", m.unit);
        return m;
    }

    friend bool operator==(const SampleMetadata&, const SampleMetadata&) = default;
};

/// Start/end timestamps of the history and both future windows.
struct PromptTimes {
    std::string ht0{kUnavailable}, ht1{kUnavailable};
    std::string ft0_s{kUnavailable}, ft1_s{kUnavailable};
    std::string ft0_l{kUnavailable}, ft1_l{kUnavailable};

    friend bool operator==(const PromptTimes&, const PromptTimes&) = default;
};

struct SampleContext {
    std::string sample_id;
    std::string series_id;
    std::vector<double> values;
    std::optional<std::vector<std::string>> timestamps;
    Window history{0, 0};
    std::size_t horizon_short = 96;
    std::size_t horizon_long = 720;
    SampleMetadata metadata;
    bool metadata_masked = false;
    PromptTimes times;

    void validate() const {
        require(history.length() >= 1, ErrorCode::BadParam, "history must hold at least one point");
        require(history.right <= values.size(), ErrorCode::OutOfBounds, "history exceeds the series");
        require(horizon_short >= 1 && horizon_long >= 1, ErrorCode::BadParam, "horizons must be >= 1");
    }

    std::vector<double> history_values() const {
        const auto s = slice(values, history);
        return {s.begin(), s.end()};
    }

    /// Up to h values right after the history (shorter near the end of the series).
    std::vector<double> future_values(std::size_t h) const {
        const std::size_t end = std::min(values.size(), history.right + h);
        const std::size_t begin = std::min(values.size(), history.right);
        return {values.begin() + static_cast<std::ptrdiff_t>(begin), values.begin() + static_cast<std::ptrdiff_t>(end)};
    }

    /// Fills `times` from the series timestamps, where present and in range.
    void derive_times() {
        times = {};
        const auto& ts = timestamps;
        if (!ts) return;
        auto at = [&](std::size_t i) { return i < ts->size() ? (*ts)[i] : std::string(kUnavailable); };
        times.ht0 = at(history.left);
        times.ht1 = at(history.right - 1);
        times.ft0_s = times.ft0_l = at(history.right);
        times.ft1_s = at(history.right + horizon_short - 1);
        times.ft1_l = at(history.right + horizon_long - 1);
    }

    /// Replaces every metadata field and timestamp with the unavailable marker.
    void mask() {
        metadata = SampleMetadata{};
        times = PromptTimes{};
        metadata_masked = true;
    }
};

inline std::string render_system_prompt(const RolloutConfig& config) {
    return prompts::fill_template(prompts::kSystem,
                                  {{"max_assistant_turns", std::to_string(config.max_assistant_turns)},
                                   {"max_parallel_calls", std::to_string(config.max_parallel_calls)}});
}

inline std::string render_user_prompt(const SampleContext& sample) {
    std::map<std::string, std::string, std::less<>> v{
        {"history_length", std::to_string(sample.history.length())},
        {"horizon_short", std::to_string(sample.horizon_short)},
        {"horizon_long", std::to_string(sample.horizon_long)},
        {"history_values_text", join_numbers(sample.history_values(), ", ")},
    };
    if (sample.metadata_masked) return prompts::fill_template(prompts::kUserMasked, v);
    const auto& m = sample.metadata;
    const auto& t = sample.times;
    v.insert({{"dataset", m.dataset},
              {"domain", m.domain},
              {"freq", m.freq},
              {"dataset_description", m.dataset_description},
              {"var_name", m.var_name},
              {"var_desc", m.var_desc},
              {"unit", m.unit},
              {"ht0", t.ht0},
              {"ht1", t.ht1},
              {"ft0_s", t.ft0_s},
              {"ft1_s", t.ft1_s},
              {"ft0_l", t.ft0_l},
              {"ft1_l", t.ft1_l}});
    return prompts::fill_template(prompts::kUserAvailable, v);
}

/// Sent as the last user turn whenever an answer must be produced without tools.
inline constexpr std::string_view kFinalNudge =
    "The tool budget for this sample is used up. Write the final answer now as plain text, without calling any tools.";

struct TurnRecord {
    std::size_t start = 0;  // index of the assistant message
    std::size_t end = 0;    // one past its last tool observation
    std::optional<long long> prompt_tokens;
    std::optional<long long> completion_tokens;

    Json to_json() const {
        Json j = {{"start", start}, {"end", end}};
        j["prompt_tokens"] = prompt_tokens ? Json(*prompt_tokens) : Json(nullptr);
        j["completion_tokens"] = completion_tokens ? Json(*completion_tokens) : Json(nullptr);
        return j;
    }

    static TurnRecord from_json(const Json& j) {
        TurnRecord t{j.at("start").get<std::size_t>(), j.at("end").get<std::size_t>(), {}, {}};
        if (j.contains("prompt_tokens") && !j["prompt_tokens"].is_null()) t.prompt_tokens = j["prompt_tokens"].get<long long>();
        if (j.contains("completion_tokens") && !j["completion_tokens"].is_null())
            t.completion_tokens = j["completion_tokens"].get<long long>();
        return t;
    }
};

struct RolloutStats {
    int turns = 0;
    int tool_calls = 0;       // executed
    int rejected_calls = 0;   // over the per-turn cap
    int tool_errors = 0;      // executed calls whose observation is an error
    bool forced_final = false;

    Json to_json() const {
        return {{"turns", turns},
                {"tool_calls", tool_calls},
                {"rejected_calls", rejected_calls},
                {"tool_errors", tool_errors},
                {"forced_final", forced_final}};
    }

    static RolloutStats from_json(const Json& j) {
        return {j.value("turns", 0), j.value("tool_calls", 0), j.value("rejected_calls", 0), j.value("tool_errors", 0),
                j.value("forced_final", false)};
    }
};

/// Data carried with a trajectory so later stages need not reopen the source series.
struct SampleRecord {
    std::string sample_id;
    std::string dataset;
    std::string series_id;
    bool metadata_masked = false;
    SampleMetadata metadata;
    std::vector<double> history;
    std::vector<double> future_short;
    std::vector<double> future_long;

    static SampleRecord from_context(const SampleContext& s) {
        return {s.sample_id,        s.metadata.dataset, s.series_id, s.metadata_masked, s.metadata,
                s.history_values(), s.future_values(s.horizon_short), s.future_values(s.horizon_long)};
    }

    Json to_json() const {
        return {{"sample_id", sample_id},
                {"dataset", dataset},
                {"series_id", series_id},
                {"metadata_masked", metadata_masked},
                {"metadata", metadata.to_json()},
                {"history", numbers_to_json(history)},
                {"future_short", numbers_to_json(future_short)},
                {"future_long", numbers_to_json(future_long)}};
    }

    static SampleRecord from_json(const Json& j) {
        SampleRecord r;
        r.sample_id = j.at("sample_id").get<std::string>();
        r.dataset = j.value("dataset", "");
        r.series_id = j.value("series_id", "");
        r.metadata_masked = j.value("metadata_masked", false);
        r.metadata = SampleMetadata::from_json(j.value("metadata", Json::object()));
        r.history = numbers_from_json(j.at("history"), "history");
        r.future_short = numbers_from_json(j.at("future_short"), "future_short");
        r.future_long = numbers_from_json(j.at("future_long"), "future_long");
        return r;
    }
};

struct Trajectory {
    SampleRecord sample;
    std::vector<ChatMessage> messages;
    std::vector<TurnRecord> turns;
    std::vector<std::optional<std::string>> descriptions;  // r^0..r^N once elicited
    RolloutStats stats;

    const std::string& sample_id() const { return sample.sample_id; }
    std::size_t turn_count() const { return turns.size(); }
    std::string final_text() const { return messages.empty() ? "" : messages.back().text(); }

    Json to_json() const {
        Json j = Json::object();
        j["sample_id"] = sample.sample_id;
        j["messages"] = Json::array();
        for (const auto& m : messages) j["messages"].push_back(m.to_json());
        j["turn_boundaries"] = Json::array();
        for (const auto& t : turns) j["turn_boundaries"].push_back(t.to_json());
        j["descriptions"] = Json::array();
        for (const auto& d : descriptions) j["descriptions"].push_back(d ? Json(*d) : Json(nullptr));
        j["stats"] = stats.to_json();
        j["sample"] = sample.to_json();
        return j;
    }

    static Trajectory from_json(const Json& j) {
        Trajectory t;
        try {
            t.sample = SampleRecord::from_json(j.at("sample"));
            for (const auto& m : j.at("messages")) t.messages.push_back(ChatMessage::from_json(m));
            for (const auto& b : j.at("turn_boundaries")) t.turns.push_back(TurnRecord::from_json(b));
            for (const auto& d : j.value("descriptions", Json::array()))
                t.descriptions.push_back(d.is_string() ? std::optional<std::string>(d.get<std::string>()) : std::nullopt);
            t.stats = RolloutStats::from_json(j.value("stats", Json::object()));
        } catch (const Json::exception& e) {
            fail(ErrorCode::Schema, std::string("bad trajectory record: ") + e.what());
        }
        return t;
    }
};

namespace detail {

inline Json error_observation(ErrorCode code, const std::string& message) {
    return {{"error", {{"code", std::string(to_string(code))}, {"message", message}}}};
}

inline CompletionRequest make_request(const RolloutConfig& config, std::vector<ChatMessage> messages, Json tools) {
    CompletionRequest r;
    r.model = config.model;
    r.messages = std::move(messages);
    r.tools = std::move(tools);
    r.temperature = config.temperature;
    r.max_tokens = config.max_tokens;
    r.seed = config.seed;
    return r;
}

inline std::string call_id_for(const ToolCall& call, int turn, std::size_t k) {
    if (!call.id.empty()) return call.id;
    return call.name + ":" + std::to_string(turn) + "." + std::to_string(k);
}

}  // namespace detail

/// Runs one sample to completion. Tools see only the history window, with
/// positions relative to its start. The last allowed turn is requested without
/// tool schemas so the model must answer in text.
inline Trajectory run_rollout(const SampleContext& sample, ChatClient& client, const tools::Toolbox& toolbox,
                              const RolloutConfig& config) {
    config.validate();
    sample.validate();
    const Series history(sample.history_values());
    const Json schemas = toolbox.schemas();

    Trajectory traj;
    traj.sample = SampleRecord::from_context(sample);
    traj.messages = {ChatMessage::system(render_system_prompt(config)), ChatMessage::user(render_user_prompt(sample))};

    bool must_answer = false;
    for (int turn = 1; turn <= config.max_assistant_turns; ++turn) {
        const bool forced = must_answer || turn == config.max_assistant_turns;
        if (forced && traj.messages.back().role != Role::User) {
            traj.messages.push_back(ChatMessage::user(std::string(kFinalNudge)));
        }
        CompletionResponse resp;
        try {
            resp = client.complete(detail::make_request(config, traj.messages, forced ? Json::array() : schemas));
        } catch (const Error& e) {
            if (e.code() == ErrorCode::MalformedResponse || e.code() == ErrorCode::CassetteMismatch) throw;
            fail(ErrorCode::Gateway, std::string(to_string(e.code())) + ": " + e.what());
        }

        ChatMessage reply = std::move(resp.message);
        TurnRecord rec{traj.messages.size(), 0, resp.usage.prompt_tokens, resp.usage.completion_tokens};
        ++traj.stats.turns;

        if (forced || reply.tool_calls.empty()) {
            const bool empty = reply.text().find_first_not_of(" \t\r\n") == std::string::npos;
            require(!(empty && forced), ErrorCode::EmptyFinal,
                    "model returned no final text for sample " + sample.sample_id);
            if (empty) {  // dropped; the next turn demands an answer
                must_answer = true;
                continue;
            }
            reply.tool_calls.clear();
            traj.messages.push_back(std::move(reply));
            rec.end = traj.messages.size();
            traj.turns.push_back(rec);
            traj.stats.forced_final = forced;
            return traj;
        }

        for (std::size_t k = 0; k < reply.tool_calls.size(); ++k)
            reply.tool_calls[k].id = detail::call_id_for(reply.tool_calls[k], turn, k);
        const auto calls = reply.tool_calls;
        traj.messages.push_back(std::move(reply));
        for (std::size_t k = 0; k < calls.size(); ++k) {
            Json observation;
            if (static_cast<int>(k) >= config.max_parallel_calls) {
                observation = detail::error_observation(
                    ErrorCode::BudgetExceeded,
                    "only " + std::to_string(config.max_parallel_calls) + " tool calls are executed per reply");
                ++traj.stats.rejected_calls;
            } else {
                ++traj.stats.tool_calls;
                std::optional<Json> args;
                try {
                    args = parse_json(calls[k].arguments, ErrorCode::BadParam);
                } catch (const Error& e) {
                    observation = detail::error_observation(e.code(), "arguments are not valid JSON");
                }
                if (args) observation = toolbox.run(history, calls[k].name, *args).to_json();
                if (observation.contains("error")) ++traj.stats.tool_errors;
            }
            traj.messages.push_back(ChatMessage::tool(calls[k].id, observation.dump()));
        }
        rec.end = traj.messages.size();
        traj.turns.push_back(rec);
    }
    fail(ErrorCode::EmptyFinal, "rollout ended without a final answer");  // unreachable: last turn is forced
}

/// Elicits r^0..r^N: r^0 from the opening prompt alone, r^i from the prefix
/// ending with turn i's observations, both without tools; r^N is the final answer.
inline std::vector<std::optional<std::string>> elicit_turn_descriptions(const Trajectory& traj, ChatClient& client,
                                                                        const RolloutConfig& config) {
    require(traj.messages.size() >= 2 && !traj.turns.empty(), ErrorCode::Schema, "trajectory is incomplete");
    std::vector<std::optional<std::string>> out;
    auto ask = [&](std::size_t prefix) -> std::optional<std::string> {
        std::vector<ChatMessage> msgs(traj.messages.begin(), traj.messages.begin() + static_cast<std::ptrdiff_t>(prefix));
        if (msgs.back().role != Role::User) msgs.push_back(ChatMessage::user(std::string(kFinalNudge)));
        CompletionResponse resp;
        try {
            resp = client.complete(detail::make_request(config, std::move(msgs), Json::array()));
        } catch (const Error& e) {
            if (e.code() == ErrorCode::MalformedResponse || e.code() == ErrorCode::CassetteMismatch) throw;
            fail(ErrorCode::Gateway, std::string(to_string(e.code())) + ": " + e.what());
        }
        const std::string text = resp.message.text();
        if (text.find_first_not_of(" \t\r\n") == std::string::npos) return std::nullopt;
        return text;
    };
    out.push_back(ask(2));
    for (std::size_t i = 0; i + 1 < traj.turns.size(); ++i) out.push_back(ask(traj.turns[i].end));
    out.push_back(traj.final_text());
    return out;
}

struct FormatReport {
    std::size_t paragraph_count = 0;
    bool prefixes_ok = false;
    std::size_t word_count = 0;
    std::vector<std::size_t> sentence_counts;
    bool has_digits = false;
    bool has_timestamp = false;
    bool pass = false;
    std::vector<std::string> reasons;
    std::vector<std::string> warnings;

    Json to_json() const {
        return {{"paragraph_count", paragraph_count}, {"prefixes_ok", prefixes_ok}, {"word_count", word_count},
                {"sentence_counts", sentence_counts}, {"has_digits", has_digits},   {"has_timestamp", has_timestamp},
                {"pass", pass},                       {"reasons", reasons},         {"warnings", warnings}};
    }
};

namespace detail {

inline std::vector<std::string> split_paragraphs(const std::string& text) {
    static const std::regex blank(R"(\n[ \t\r]*\n)");
    std::vector<std::string> out;
    for (std::sregex_token_iterator it(text.begin(), text.end(), blank, -1), end; it != end; ++it) {
        std::string p = *it;
        const auto a = p.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) continue;
        const auto b = p.find_last_not_of(" \t\r\n");
        out.push_back(p.substr(a, b - a + 1));
    }
    return out;
}

inline std::size_t count_words(const std::string& text) {
    std::istringstream in(text);
    std::size_t n = 0;
    for (std::string w; in >> w;) ++n;
    return n;
}

/// Sentences end at '.', '!' or '?' followed by whitespace or the end of text.
inline std::size_t count_sentences(const std::string& p) {
    std::size_t n = 0;
    bool content = false;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const char c = p[i];
        const bool terminal = (c == '.' || c == '!' || c == '?') &&
                              (i + 1 == p.size() || std::isspace(static_cast<unsigned char>(p[i + 1])));
        if (terminal) {
            if (content) ++n;
            content = false;
        } else if (!std::isspace(static_cast<unsigned char>(c)) && c != '.' && c != '!' && c != '?') {
            content = true;
        }
    }
    return n + (content ? 1 : 0);
}

}  // namespace detail

inline FormatReport validate_final_format(const std::string& text) {
    static const std::regex timestamp(R"(\d{4}-\d{2}-\d{2}|\b\d{1,2}:\d{2}\b)");
    FormatReport r;
    const auto paragraphs = detail::split_paragraphs(text);
    r.paragraph_count = paragraphs.size();
    r.word_count = detail::count_words(text);
    for (const auto& p : paragraphs) r.sentence_counts.push_back(detail::count_sentences(p));
    r.prefixes_ok = paragraphs.size() >= 2 && paragraphs[0].starts_with("In the short term,") &&
                    paragraphs[1].starts_with("In the long term,");
    r.has_digits = std::any_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; });
    r.has_timestamp = std::regex_search(text, timestamp);

    if (r.paragraph_count != 2) r.reasons.push_back("expected 2 paragraphs, found " + std::to_string(r.paragraph_count));
    if (!r.prefixes_ok) r.reasons.push_back("paragraphs must open with 'In the short term,' and 'In the long term,'");
    if (r.word_count >= 300) r.reasons.push_back("answer has " + std::to_string(r.word_count) + " words (limit < 300)");
    for (std::size_t i = 0; i < r.sentence_counts.size(); ++i)
        if (r.sentence_counts[i] < 3 || r.sentence_counts[i] > 5)
            r.reasons.push_back("paragraph " + std::to_string(i + 1) + " has " + std::to_string(r.sentence_counts[i]) +
                                " sentences (expected 3-5)");
    if (r.has_digits) r.warnings.push_back("contains digits");
    if (r.has_timestamp) r.warnings.push_back("contains a timestamp-like token");
    r.pass = r.reasons.empty();
    return r;
}

}  // namespace tsagent
