#pragma once

// Turn-level credit assignment: per-turn scores, marginal deltas, discounted
// returns, pooled group normalization and token-span advantages.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "tsagent/agent.hpp"
#include "tsagent/error.hpp"
#include "tsagent/json.hpp"
#include "tsagent/scoring.hpp"

namespace tsagent {

inline constexpr double kAdvantageFloor = 1e-8;

enum class HeadSelection { Short, Long, Both };

inline HeadSelection head_selection_from_string(std::string_view s) {
    if (s == "short") return HeadSelection::Short;
    if (s == "long") return HeadSelection::Long;
    if (s == "both") return HeadSelection::Both;
    fail(ErrorCode::BadConfig, "heads must be short, long or both, got '" + std::string(s) + "'");
}

struct RewardConfig {
    QuantileLevels quantiles;
    HeadSelection heads = HeadSelection::Both;
    double gamma = 1.0;
    int workers = 1;

    void validate() const {
        quantiles.validate();
        require(gamma >= 0.0 && gamma <= 1.0, ErrorCode::BadParam, "gamma must lie in [0, 1]");
        require(workers >= 1, ErrorCode::BadConfig, "workers must be >= 1");
    }
};

/// Per-turn scores S^0..S^N. A failed turn leaves a gap and an error message.
struct TurnScores {
    std::vector<std::optional<double>> scores;
    std::vector<std::string> errors;

    bool valid() const {
        return !scores.empty() && errors.empty() &&
               std::all_of(scores.begin(), scores.end(), [](const auto& s) { return s.has_value(); });
    }

    std::vector<double> values() const {
        require(valid(), ErrorCode::Shape, "trajectory has unscored turns");
        std::vector<double> v;
        for (const auto& s : scores) v.push_back(*s);
        return v;
    }
};

/// Scores every description r^i of a trajectory against its own future.
inline TurnScores compute_scores(const Trajectory& t, Scorer& scorer, const RewardConfig& config = {}) {
    const std::size_t expected = t.turn_count() + 1;
    require(t.descriptions.size() == expected, ErrorCode::Shape,
            "trajectory " + t.sample_id() + " holds " + std::to_string(t.descriptions.size()) +
                " descriptions for " + std::to_string(t.turn_count()) + " turns");
    std::vector<std::vector<double>> targets;
    std::vector<std::size_t> horizons;
    if (config.heads != HeadSelection::Long) {
        targets.push_back(t.sample.future_short);
        horizons.push_back(t.sample.future_short.size());
    }
    if (config.heads != HeadSelection::Short) {
        targets.push_back(t.sample.future_long);
        horizons.push_back(t.sample.future_long.size());
    }
    for (std::size_t h : horizons) require(h >= 1, ErrorCode::Shape, "trajectory " + t.sample_id() + " has an empty future");

    TurnScores out;
    for (std::size_t i = 0; i < expected; ++i) {
        const auto& r = t.descriptions[i];
        if (!r) {
            out.scores.push_back(std::nullopt);
            out.errors.push_back("turn " + std::to_string(i) + ": no description");
            continue;
        }
        try {
            out.scores.push_back(
                full_objective(t.sample.history, *r, targets, horizons, scorer, config.quantiles).score());
        } catch (const Error& e) {
            out.scores.push_back(std::nullopt);
            out.errors.push_back("turn " + std::to_string(i) + ": " + std::string(to_string(e.code())) + ": " + e.what());
        }
    }
    return out;
}

/// Delta^i = S^i - S^{i-1}, i = 1..N.
inline std::vector<double> compute_deltas(const std::vector<double>& scores) {
    require(!scores.empty(), ErrorCode::Shape, "need at least S^0");
    std::vector<double> d;
    for (std::size_t i = 1; i < scores.size(); ++i) d.push_back(scores[i] - scores[i - 1]);
    return d;
}

/// R^i = Delta^i + gamma R^{i+1}.
inline std::vector<double> compute_returns(const std::vector<double>& deltas, double gamma) {
    require(gamma >= 0.0 && gamma <= 1.0, ErrorCode::BadParam, "gamma must lie in [0, 1]");
    std::vector<double> r(deltas.size());
    double next = 0.0;
    for (std::size_t i = deltas.size(); i-- > 0;) r[i] = next = deltas[i] + gamma * next;
    return r;
}

/// (R - mean) / std over all turn returns of all trajectories in the group.
inline std::vector<std::vector<double>> group_normalize(const std::vector<std::vector<double>>& returns) {
    std::size_t n = 0;
    double sum = 0.0;
    for (const auto& rs : returns)
        for (double r : rs) ++n, sum += r;
    require(n >= 2, ErrorCode::DegenerateGroup,
            "group pools " + std::to_string(n) + " returns; normalization needs at least 2");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto& rs : returns)
        for (double r : rs) ss += (r - mean) * (r - mean);
    const double sd = std::max(std::sqrt(ss / static_cast<double>(n)), kAdvantageFloor);
    std::vector<std::vector<double>> out;
    for (const auto& rs : returns) {
        auto& a = out.emplace_back();
        for (double r : rs) a.push_back((r - mean) / sd);
    }
    return out;
}

struct TokenSpan {
    std::size_t turn = 0;  // 1-based
    long long start = 0;
    long long end = 0;  // exclusive
    double advantage = 0.0;

    Json to_json() const { return {{"turn", turn}, {"start", start}, {"end", end}, {"advantage", advantage}}; }
    static TokenSpan from_json(const Json& j) {
        return {j.at("turn").get<std::size_t>(), j.at("start").get<long long>(), j.at("end").get<long long>(),
                j.at("advantage").get<double>()};
    }
    bool operator==(const TokenSpan&) const = default;
};

/// Turn i's completion tokens sit right after its prompt tokens in the running
/// conversation, so its span is [prompt, prompt + completion).
inline std::vector<TokenSpan> attach_token_advantages(const Trajectory& t, const std::vector<double>& advantages) {
    require(advantages.size() == t.turn_count(), ErrorCode::Shape,
            "got " + std::to_string(advantages.size()) + " advantages for " + std::to_string(t.turn_count()) + " turns");
    std::vector<TokenSpan> spans;
    long long prev_end = 0;
    for (std::size_t i = 0; i < t.turns.size(); ++i) {
        const auto& turn = t.turns[i];
        require(turn.prompt_tokens && turn.completion_tokens, ErrorCode::MissingTokenization,
                "turn " + std::to_string(i + 1) + " of " + t.sample_id() + " has no token counts");
        require(turn.start < t.messages.size() && t.messages[turn.start].role == Role::Assistant, ErrorCode::Shape,
                "turn " + std::to_string(i + 1) + " does not start at an assistant message");
        const long long start = *turn.prompt_tokens, end = start + *turn.completion_tokens;
        require(start >= prev_end && end >= start, ErrorCode::Shape,
                "token spans of " + t.sample_id() + " overlap or run backwards at turn " + std::to_string(i + 1));
        spans.push_back({i + 1, start, end, advantages[i]});
        prev_end = end;
    }
    return spans;
}

struct RlRecord {
    std::string group_id;
    std::string sample_id;
    std::size_t group_size = 0;
    std::vector<ChatMessage> messages;
    std::vector<TokenSpan> spans;
    std::vector<double> scores;
    std::vector<double> deltas;
    std::vector<double> returns;
    double gamma = 1.0;
    Json metadata = Json::object();

    Json to_json() const {
        Json j = Json::object();
        j["group_id"] = group_id;
        j["sample_id"] = sample_id;
        j["group_size"] = group_size;
        j["messages"] = Json::array();
        for (const auto& m : messages) j["messages"].push_back(m.to_json());
        j["spans"] = Json::array();
        for (const auto& s : spans) j["spans"].push_back(s.to_json());
        j["scores"] = scores;
        j["deltas"] = deltas;
        j["returns"] = returns;
        j["gamma"] = gamma;
        j["metadata"] = metadata;
        return j;
    }

    static RlRecord from_json(const Json& j) {
        RlRecord r;
        try {
            r.group_id = j.at("group_id").get<std::string>();
            r.sample_id = j.at("sample_id").get<std::string>();
            r.group_size = j.at("group_size").get<std::size_t>();
            for (const auto& m : j.at("messages")) r.messages.push_back(ChatMessage::from_json(m));
            for (const auto& s : j.at("spans")) r.spans.push_back(TokenSpan::from_json(s));
            r.scores = j.at("scores").get<std::vector<double>>();
            r.deltas = j.at("deltas").get<std::vector<double>>();
            r.returns = j.at("returns").get<std::vector<double>>();
            r.gamma = j.at("gamma").get<double>();
            r.metadata = j.value("metadata", Json::object());
        } catch (const Json::exception& e) {
            fail(ErrorCode::Schema, std::string("bad RL record: ") + e.what());
        }
        return r;
    }
};

/// Structural check mirroring docs/rl_batch.schema.json. Returns problems found.
inline std::vector<std::string> validate_rl_record(const Json& j) {
    std::vector<std::string> errs;
    if (!j.is_object()) return {"record is not an object"};
    auto need = [&](const char* key, bool ok) {
        if (!j.contains(key)) errs.push_back(std::string("missing ") + key);
        else if (!ok) errs.push_back(std::string("wrong type for ") + key);
    };
    auto numbers = [&](const char* key) {
        if (!j.contains(key) || !j[key].is_array()) return false;
        return std::all_of(j[key].begin(), j[key].end(), [](const Json& x) { return x.is_number(); });
    };
    need("group_id", j.contains("group_id") && j["group_id"].is_string());
    need("sample_id", j.contains("sample_id") && j["sample_id"].is_string());
    need("group_size", j.contains("group_size") && j["group_size"].is_number_unsigned() && j["group_size"] >= 1);
    need("messages", j.contains("messages") && j["messages"].is_array());
    need("spans", j.contains("spans") && j["spans"].is_array());
    need("scores", numbers("scores"));
    need("deltas", numbers("deltas"));
    need("returns", numbers("returns"));
    need("gamma", j.contains("gamma") && j["gamma"].is_number() && j["gamma"] >= 0 && j["gamma"] <= 1);
    if (!errs.empty()) return errs;

    for (const auto& m : j["messages"])
        if (!m.is_object() || !m.contains("role") || !m["role"].is_string()) errs.push_back("message without role");
    for (const auto& s : j["spans"]) {
        const bool ok = s.is_object() && s.contains("turn") && s["turn"].is_number_unsigned() && s["turn"] >= 1 &&
                        s.contains("start") && s["start"].is_number_integer() && s.contains("end") &&
                        s["end"].is_number_integer() && s.contains("advantage") && s["advantage"].is_number() &&
                        s["end"] >= s["start"] && s["start"] >= 0;
        if (!ok) errs.push_back("malformed span");
    }
    const std::size_t n = j["deltas"].size();
    if (j["scores"].size() != n + 1) errs.push_back("scores must hold one more entry than deltas");
    if (j["returns"].size() != n) errs.push_back("returns and deltas differ in length");
    if (j["spans"].size() != n) errs.push_back("one span per turn expected");
    return errs;
}

struct TrajectoryGroup {
    std::string group_id;
    std::vector<Trajectory> members;
};

struct GroupCredit {
    std::string group_id;
    std::vector<TurnScores> scores;  // per member
    std::vector<RlRecord> records;   // valid members only, in member order
    std::vector<std::string> excluded;
    std::optional<std::string> error;  // whole group unusable
};

/// Scores members (fanning out over `workers`), drops members with a failed
/// turn, and normalizes returns over the surviving members.
inline GroupCredit credit_group(const TrajectoryGroup& group, Scorer& scorer, const RewardConfig& config = {}) {
    config.validate();
    GroupCredit out;
    out.group_id = group.group_id;
    const std::size_t G = group.members.size();
    out.scores.resize(G);
    std::vector<std::string> setup_errors(G);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next++) < G;) {
            try {
                out.scores[i] = compute_scores(group.members[i], scorer, config);
            } catch (const Error& e) {
                setup_errors[i] = std::string(to_string(e.code())) + ": " + e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < std::min<int>(config.workers, static_cast<int>(G)); ++w) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();

    std::vector<std::size_t> kept;
    std::vector<std::vector<double>> scores, deltas, returns;
    for (std::size_t i = 0; i < G; ++i) {
        const auto& t = group.members[i];
        if (!setup_errors[i].empty() || !out.scores[i].valid()) {
            std::string why = setup_errors[i];
            for (const auto& e : out.scores[i].errors) why += (why.empty() ? "" : "; ") + e;
            out.excluded.push_back(t.sample_id() + ": " + why);
            continue;
        }
        kept.push_back(i);
        scores.push_back(out.scores[i].values());
        deltas.push_back(compute_deltas(scores.back()));
        returns.push_back(compute_returns(deltas.back(), config.gamma));
    }
    if (kept.empty()) {
        out.error = "no scorable trajectories";
        return out;
    }
    std::vector<std::vector<double>> adv;
    try {
        adv = group_normalize(returns);
    } catch (const Error& e) {
        out.error = std::string(to_string(e.code())) + ": " + e.what();
        return out;
    }
    for (std::size_t k = 0; k < kept.size(); ++k) {
        const auto& t = group.members[kept[k]];
        RlRecord r;
        r.group_id = group.group_id;
        r.sample_id = t.sample_id();
        r.group_size = kept.size();
        r.messages = t.messages;
        try {
            r.spans = attach_token_advantages(t, adv[k]);
        } catch (const Error& e) {
            out.excluded.push_back(t.sample_id() + ": " + std::string(to_string(e.code())) + ": " + e.what());
            continue;
        }
        r.scores = scores[k];
        r.deltas = deltas[k];
        r.returns = returns[k];
        r.gamma = config.gamma;
        r.metadata = {{"dataset", t.sample.dataset},
                      {"series_id", t.sample.series_id},
                      {"metadata_masked", t.sample.metadata_masked},
                      {"member", kept[k]}};
        out.records.push_back(std::move(r));
    }
    return out;
}

/// Groups trajectories by sample id in first-seen order.
inline std::vector<TrajectoryGroup> group_by_sample(const std::vector<Trajectory>& trajectories) {
    std::vector<TrajectoryGroup> groups;
    std::map<std::string, std::size_t> index;
    for (const auto& t : trajectories) {
        auto [it, inserted] = index.emplace(t.sample_id(), groups.size());
        if (inserted) groups.push_back({t.sample_id(), {}});
        groups[it->second].members.push_back(t);
    }
    return groups;
}

/// Writes one JSONL line per record. Returns the number written.
inline std::size_t export_rl_batch(const std::vector<GroupCredit>& groups, std::ostream& out) {
    std::size_t n = 0;
    for (const auto& g : groups)
        for (const auto& r : g.records) {
            out << r.to_json().dump() << '\n';
            ++n;
        }
    require(static_cast<bool>(out), ErrorCode::Io, "failed to write the RL batch");
    return n;
}

}  // namespace tsagent
