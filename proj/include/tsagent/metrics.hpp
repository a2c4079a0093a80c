#pragma once

// Point-forecast metrics over valid positions, and the judge-based accuracy
// of free-text forecasts.

#include <atomic>
#include <cmath>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "tsagent/corpus.hpp"
#include "tsagent/error.hpp"
#include "tsagent/gateway.hpp"
#include "tsagent/json.hpp"
#include "tsagent/prompts.hpp"

namespace tsagent {

/// Neumaier-compensated running sum.
class KahanSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) c_ += (sum_ - t) + x;
        else c_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + c_; }

private:
    double sum_ = 0.0;
    double c_ = 0.0;
};

struct EvalSample {
    std::string sample_id;
    std::vector<double> target;
    std::vector<double> prediction;
    std::vector<bool> mask;  // empty: every finite target is valid
    std::vector<double> history;

    void validate() const {
        require(target.size() == prediction.size(), ErrorCode::Shape,
                sample_id + ": target and prediction lengths differ");
        require(mask.empty() || mask.size() == target.size(), ErrorCode::Shape,
                sample_id + ": mask length differs from target");
        for (std::size_t t = 0; t < target.size(); ++t)
            require(!valid(t) || std::isfinite(prediction[t]), ErrorCode::Shape,
                    sample_id + ": non-finite prediction at a valid position");
    }

    bool valid(std::size_t t) const { return (mask.empty() || mask[t]) && std::isfinite(target[t]); }

    static EvalSample from_json(const Json& j) {
        EvalSample s;
        try {
            s.sample_id = j.value("sample_id", "");
            s.target = numbers_from_json(j.at("target"), "target");
            s.prediction = numbers_from_json(j.at("prediction"), "prediction");
            if (j.contains("mask") && !j["mask"].is_null())
                for (const auto& m : j["mask"]) s.mask.push_back(m.get<bool>());
            if (j.contains("history") && !j["history"].is_null()) s.history = numbers_from_json(j["history"], "history");
        } catch (const Json::exception& e) {
            fail(ErrorCode::Schema, std::string("bad eval record: ") + e.what());
        }
        return s;
    }
};

enum class Averaging { Micro, Macro };

namespace detail {

template <class F>
double pooled_mean(const std::vector<EvalSample>& set, Averaging avg, F&& term) {
    KahanSum outer;
    std::size_t outer_n = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto& s = set[i];
        s.validate();
        KahanSum inner;
        std::size_t n = 0;
        for (std::size_t t = 0; t < s.target.size(); ++t)
            if (s.valid(t)) {
                inner.add(term(s, i, t));
                ++n;
            }
        if (avg == Averaging::Micro) {
            outer.add(inner.value());
            outer_n += n;
        } else if (n > 0) {
            outer.add(inner.value() / static_cast<double>(n));
            ++outer_n;
        }
    }
    require(outer_n > 0, ErrorCode::EmptyOmega, "no valid forecast positions");
    return outer.value() / static_cast<double>(outer_n);
}

}  // namespace detail

inline std::size_t count_positions(const std::vector<EvalSample>& set) {
    std::size_t n = 0;
    for (const auto& s : set)
        for (std::size_t t = 0; t < s.target.size(); ++t) n += s.valid(t);
    return n;
}

inline double mse(const std::vector<EvalSample>& set, Averaging avg = Averaging::Micro) {
    return detail::pooled_mean(set, avg, [](const EvalSample& s, std::size_t, std::size_t t) {
        const double e = s.target[t] - s.prediction[t];
        return e * e;
    });
}

inline double mae(const std::vector<EvalSample>& set, Averaging avg = Averaging::Micro) {
    return detail::pooled_mean(set, avg,
                               [](const EvalSample& s, std::size_t, std::size_t t) { return std::abs(s.target[t] - s.prediction[t]); });
}

/// Mean |x_t - x_{t-s}| over pairs of finite history values.
inline double seasonal_naive_scale(std::span<const double> history, std::size_t s) {
    require(s >= 1, ErrorCode::BadParam, "season must be >= 1");
    require(history.size() > s, ErrorCode::WindowTooShort, "history must be longer than the season");
    KahanSum sum;
    std::size_t n = 0;
    for (std::size_t t = s; t < history.size(); ++t)
        if (std::isfinite(history[t]) && std::isfinite(history[t - s])) {
            sum.add(std::abs(history[t] - history[t - s]));
            ++n;
        }
    const double d = n ? sum.value() / static_cast<double>(n) : 0.0;
    require(d > 0.0, ErrorCode::ZeroDenominator, "history is constant at the season, MASE is undefined");
    return d;
}

/// Each absolute error is scaled by its own sample's in-sample naive error, then
/// averaged over all valid positions (micro) or per sample first (macro).
inline double mase(const std::vector<EvalSample>& set, std::size_t season = 1, Averaging avg = Averaging::Micro) {
    std::vector<double> scale;
    for (const auto& s : set) scale.push_back(seasonal_naive_scale(s.history, season));
    return detail::pooled_mean(set, avg, [&](const EvalSample& s, std::size_t i, std::size_t t) {
        return std::abs(s.target[t] - s.prediction[t]) / scale[i];
    });
}

struct JudgeItem {
    std::string sample_id;
    std::string description;
    std::vector<double> future_short;
    std::vector<double> future_long;
};

struct JudgeAccuracyReport {
    std::size_t n = 0;
    std::size_t passed = 0;
    std::size_t malformed = 0;
    std::vector<QcVerdict> verdicts;

    double accuracy() const { return n ? static_cast<double>(passed) / static_cast<double>(n) : 0.0; }

    Json to_json() const {
        return {{"judge_accuracy", accuracy()}, {"judged", n}, {"passed", passed}, {"malformed", malformed}};
    }
};

inline std::string render_accuracy_prompt(const JudgeItem& item) {
    return prompts::fill_template(prompts::kJudgeAccuracy, {{"forecast_text", item.description},
                                                            {"future_short_text", join_numbers(item.future_short, ", ")},
                                                            {"future_long_text", join_numbers(item.future_long, ", ")}});
}

/// Fraction of items the accuracy judge passes. Malformed verdicts count as
/// failures and are tallied separately.
inline JudgeAccuracyReport judge_accuracy(const std::vector<JudgeItem>& items, ChatClient& judge,
                                          const JudgeConfig& config = {}, int workers = 1) {
    require(workers >= 1, ErrorCode::BadConfig, "workers must be >= 1");
    std::vector<QcVerdict> verdicts(items.size());
    std::vector<std::string> errors(items.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next++) < items.size();) {
            try {
                const auto resp = judge.complete(judge_request(render_accuracy_prompt(items[i]), config));
                verdicts[i] = parse_verdict(QcCheck::ForecastAccuracy, resp.message.text(), 1);
            } catch (const Error& e) {
                if (e.code() == ErrorCode::MalformedResponse) {
                    verdicts[i] = {QcCheck::ForecastAccuracy, false, "malformed", 1, true};
                } else {
                    errors[i] = std::string(to_string(e.code())) + ": " + e.what();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < std::min<int>(workers, static_cast<int>(items.size())); ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    for (std::size_t i = 0; i < items.size(); ++i)
        require(errors[i].empty(), ErrorCode::Gateway, items[i].sample_id + ": " + errors[i]);

    JudgeAccuracyReport r;
    r.n = items.size();
    for (const auto& v : verdicts) {
        r.passed += v.pass;
        r.malformed += v.malformed;
    }
    r.verdicts = std::move(verdicts);
    return r;
}

struct EvalReport {
    double mse = 0.0;
    double mae = 0.0;
    std::optional<double> mase;
    std::size_t n_positions = 0;
    std::optional<JudgeAccuracyReport> judge;
    Averaging averaging = Averaging::Micro;

    Json to_json() const {
        Json j = {{"mse", mse}, {"mae", mae}};
        j["mase"] = mase ? Json(*mase) : Json(nullptr);
        j["n_positions"] = n_positions;
        j["averaging"] = averaging == Averaging::Micro ? "micro" : "macro";
        if (judge) {
            j["judge_accuracy"] = judge->accuracy();
            j["judge_malformed"] = judge->malformed;
        }
        return j;
    }
};

/// MASE is reported only when every sample carries a history.
inline EvalReport evaluate(const std::vector<EvalSample>& set, std::size_t season = 1, Averaging avg = Averaging::Micro) {
    EvalReport r;
    r.averaging = avg;
    r.mse = mse(set, avg);
    r.mae = mae(set, avg);
    r.n_positions = count_positions(set);
    if (std::all_of(set.begin(), set.end(), [](const EvalSample& s) { return !s.history.empty(); }))
        r.mase = mase(set, season, avg);
    return r;
}

}  // namespace tsagent
