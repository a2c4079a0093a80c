#pragma once

// Quantile forecasting objective, description-conditioned scorers, and a
// reference forward pass of the gated cross-attention fusion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <semaphore>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tsagent/error.hpp"
#include "tsagent/gateway.hpp"
#include "tsagent/json.hpp"
#include "tsagent/series.hpp"

namespace tsagent {

struct QuantileLevels {
    std::vector<double> q{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

    void validate() const {
        require(!q.empty(), ErrorCode::BadParam, "quantile levels must not be empty");
        for (std::size_t i = 0; i < q.size(); ++i) {
            require(q[i] > 0.0 && q[i] < 1.0, ErrorCode::BadParam, "quantile levels must lie in (0, 1)");
            require(i == 0 || q[i] > q[i - 1], ErrorCode::BadParam, "quantile levels must be strictly increasing");
        }
    }

    std::size_t size() const { return q.size(); }
};

/// 2 |(y - yhat)(1[y <= yhat] - q)|, so q = 0.5 gives |y - yhat|.
inline double pinball(double y, double yhat, double q) {
    require(q > 0.0 && q < 1.0, ErrorCode::BadParam, "quantile level must lie in (0, 1)");
    const double indicator = y <= yhat ? 1.0 : 0.0;
    return 2.0 * std::abs((y - yhat) * (indicator - q));
}

/// w_t = (ln H - ln t) / H for t = 1..H. The last step always gets weight 0.
inline std::vector<double> log_decay_weights(std::size_t H) {
    require(H >= 1, ErrorCode::BadParam, "horizon must be >= 1");
    std::vector<double> w(H);
    const double lnH = std::log(static_cast<double>(H));
    for (std::size_t t = 1; t <= H; ++t) w[t - 1] = (lnH - std::log(static_cast<double>(t))) / static_cast<double>(H);
    return w;
}

/// Rows are forecast steps, columns quantile levels.
using QuantileMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct QuantileHead {
    std::size_t horizon = 0;
    QuantileMatrix values;
};

struct QuantileForecast {
    std::vector<QuantileHead> heads;
};

/// Sorts each row so quantiles never cross.
inline void repair_crossing(QuantileMatrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) std::sort(m.row(r).begin(), m.row(r).end());
}

struct TargetBundle {
    std::vector<double> values;
    std::vector<bool> mask;  // true: position contributes to the loss

    /// Finite values are valid; a target shorter than `horizon` is padded with masked slots.
    static TargetBundle from_values(std::span<const double> ys, std::size_t horizon) {
        TargetBundle t;
        t.values.assign(horizon, std::nan(""));
        t.mask.assign(horizon, false);
        for (std::size_t i = 0; i < std::min(horizon, ys.size()); ++i) {
            t.values[i] = ys[i];
            t.mask[i] = std::isfinite(ys[i]);
        }
        return t;
    }
};

namespace detail {

inline void check_head(const QuantileMatrix& pred, const TargetBundle& target, const QuantileLevels& Q) {
    require(target.values.size() == target.mask.size(), ErrorCode::Shape, "target mask length differs from values");
    require(static_cast<std::size_t>(pred.rows()) == target.values.size(), ErrorCode::Shape,
            "forecast has " + std::to_string(pred.rows()) + " rows for a horizon of " +
                std::to_string(target.values.size()));
    require(static_cast<std::size_t>(pred.cols()) == Q.size(), ErrorCode::Shape,
            "forecast has " + std::to_string(pred.cols()) + " quantile columns, expected " + std::to_string(Q.size()));
}

inline double sample_head_loss(const QuantileMatrix& pred, const TargetBundle& target, const QuantileLevels& Q,
                               const std::vector<double>& w) {
    double total = 0.0;
    for (std::size_t t = 0; t < w.size(); ++t) {
        if (!target.mask[t] || !std::isfinite(target.values[t])) continue;
        double per_q = 0.0;
        for (std::size_t k = 0; k < Q.size(); ++k) {
            const double yhat = pred(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k));
            require(std::isfinite(yhat), ErrorCode::Shape, "forecast holds a non-finite value at a valid position");
            per_q += pinball(target.values[t], yhat, Q.q[k]);
        }
        total += w[t] * per_q / static_cast<double>(Q.size());
    }
    return total;
}

}  // namespace detail

/// Masked, log-decay weighted pinball loss of one horizon head, averaged over the batch.
inline double horizon_loss(std::span<const QuantileMatrix> preds, std::span<const TargetBundle> targets,
                           const QuantileLevels& Q) {
    Q.validate();
    require(!preds.empty(), ErrorCode::Shape, "empty batch");
    require(preds.size() == targets.size(), ErrorCode::Shape, "batch sizes of forecasts and targets differ");
    const std::size_t H = targets[0].values.size();
    const auto w = log_decay_weights(H);
    double sum = 0.0;
    for (std::size_t b = 0; b < preds.size(); ++b) {
        require(targets[b].values.size() == H, ErrorCode::Shape, "targets in one head must share the horizon");
        detail::check_head(preds[b], targets[b], Q);
        sum += detail::sample_head_loss(preds[b], targets[b], Q, w);
    }
    return sum / static_cast<double>(preds.size());
}

inline double horizon_loss(const QuantileMatrix& pred, const TargetBundle& target, const QuantileLevels& Q) {
    return horizon_loss(std::span(&pred, 1), std::span(&target, 1), Q);
}

/// Description-conditioned quantile forecaster. Histories arrive normalized.
class Scorer {
public:
    virtual ~Scorer() = default;
    virtual QuantileForecast forecast(std::span<const double> history, const std::string& description,
                                      const std::vector<std::size_t>& horizons, const QuantileLevels& Q) = 0;
};

/// Repeats the last season of the history; every quantile column equals the point
/// forecast. Ignores the description. A missing value at the chosen phase falls
/// back to the same phase one season earlier, then to 0 (the history mean).
class SeasonalNaiveScorer : public Scorer {
public:
    explicit SeasonalNaiveScorer(std::size_t season = 1) : season_(season) {
        require(season_ >= 1, ErrorCode::BadParam, "season must be >= 1");
    }

    QuantileForecast forecast(std::span<const double> history, const std::string&,
                              const std::vector<std::size_t>& horizons, const QuantileLevels& Q) override {
        Q.validate();
        const std::size_t L = history.size(), s = season_;
        require(L >= s, ErrorCode::WindowTooShort, "history shorter than the season");
        QuantileForecast f;
        for (std::size_t H : horizons) {
            QuantileHead head{H, QuantileMatrix(static_cast<Eigen::Index>(H), static_cast<Eigen::Index>(Q.size()))};
            for (std::size_t t = 0; t < H; ++t) {
                double v = 0.0;
                for (std::size_t i = L - s + t % s;; i -= s) {
                    if (std::isfinite(history[i])) {
                        v = history[i];
                        break;
                    }
                    if (i < s) break;
                }
                head.values.row(static_cast<Eigen::Index>(t)).setConstant(v);
            }
            f.heads.push_back(std::move(head));
        }
        return f;
    }

    std::size_t season() const { return season_; }

private:
    std::size_t season_;
};

/// Parses and validates a scorer reply against the requested horizons and levels.
inline QuantileForecast parse_forecast(const Json& body, const std::vector<std::size_t>& horizons,
                                       const QuantileLevels& Q) {
    require(body.is_object() && body.contains("heads") && body["heads"].is_array(), ErrorCode::Schema,
            "scorer reply needs a heads array");
    const auto& heads = body["heads"];
    require(heads.size() == horizons.size(), ErrorCode::Schema,
            "scorer returned " + std::to_string(heads.size()) + " heads for " + std::to_string(horizons.size()) +
                " horizons");
    QuantileForecast f;
    for (std::size_t k = 0; k < horizons.size(); ++k) {
        const auto& h = heads[k];
        require(h.is_object() && h.contains("horizon") && h["horizon"].is_number_integer() && h.contains("values") &&
                    h["values"].is_array(),
                ErrorCode::Schema, "scorer head " + std::to_string(k) + " needs horizon and values");
        require(h["horizon"].get<long long>() == static_cast<long long>(horizons[k]), ErrorCode::Schema,
                "scorer head " + std::to_string(k) + " has the wrong horizon");
        const auto& rows = h["values"];
        require(rows.size() == horizons[k], ErrorCode::Schema, "scorer head " + std::to_string(k) + " has wrong row count");
        QuantileHead head{horizons[k],
                          QuantileMatrix(static_cast<Eigen::Index>(horizons[k]), static_cast<Eigen::Index>(Q.size()))};
        for (std::size_t t = 0; t < rows.size(); ++t) {
            require(rows[t].is_array() && rows[t].size() == Q.size(), ErrorCode::Schema,
                    "scorer row " + std::to_string(t) + " must hold one value per quantile level");
            for (std::size_t c = 0; c < Q.size(); ++c) {
                require(rows[t][c].is_number() && std::isfinite(rows[t][c].get<double>()), ErrorCode::Schema,
                        "scorer values must be finite numbers");
                head.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = rows[t][c].get<double>();
            }
        }
        repair_crossing(head.values);
        f.heads.push_back(std::move(head));
    }
    return f;
}

struct RemoteScorerConfig {
    std::string endpoint;  // full URL of the POST route
    double timeout_s = 30.0;
    int max_connections = 4;
};

/// Scorer behind an HTTP endpoint:
/// POST {history, description, horizons, quantiles} -> {heads: [{horizon, values}]}.
class RemoteScorer : public Scorer {
public:
    explicit RemoteScorer(RemoteScorerConfig config)
        : config_(std::move(config)), slots_(std::max(1, config_.max_connections)) {
        require(!config_.endpoint.empty(), ErrorCode::BadConfig, "remote scorer needs an endpoint");
        url_ = detail::split_url(config_.endpoint);
        if (url_.path.empty()) url_.path = "/";
    }

    QuantileForecast forecast(std::span<const double> history, const std::string& description,
                              const std::vector<std::size_t>& horizons, const QuantileLevels& Q) override {
        Q.validate();
        Json req = {{"history", numbers_to_json({history.begin(), history.end()})},
                    {"description", description},
                    {"horizons", horizons},
                    {"quantiles", Q.q}};
        slots_.acquire();
        struct Release {
            std::counting_semaphore<256>& s;
            ~Release() { s.release(); }
        } release{slots_};
        httplib::Client cli(url_.origin);
        const auto t = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::duration<double>(config_.timeout_s));
        cli.set_connection_timeout(t);
        cli.set_read_timeout(t);
        cli.set_write_timeout(t);
        auto res = cli.Post(url_.path, req.dump(), "application/json");
        require(static_cast<bool>(res), ErrorCode::Transport,
                "scorer request failed: " + (res ? std::string() : httplib::to_string(res.error())));
        require(res->status == 200, ErrorCode::Transport, "scorer returned HTTP " + std::to_string(res->status));
        return parse_forecast(parse_json(res->body, ErrorCode::Schema), horizons, Q);
    }

private:
    RemoteScorerConfig config_;
    detail::UrlParts url_;
    std::counting_semaphore<256> slots_;
};

struct ObjectiveResult {
    std::vector<double> head_losses;
    double loss = 0.0;
    double score() const { return -loss; }
};

/// Normalizes history and targets with the history statistics, asks the scorer
/// for one head per target, and averages the head losses.
inline ObjectiveResult full_objective(std::span<const double> history, const std::string& description,
                                      const std::vector<std::vector<double>>& targets, const std::vector<std::size_t>& horizons,
                                      Scorer& scorer, const QuantileLevels& Q = {}) {
    require(!horizons.empty() && horizons.size() == targets.size(), ErrorCode::Shape,
            "need one target per horizon head");
    const NormStats stats = NormStats::from_history(history);
    const auto hist = normalize(history, stats);
    auto forecast = scorer.forecast(hist, description, horizons, Q);
    require(forecast.heads.size() == horizons.size(), ErrorCode::Shape, "scorer returned the wrong number of heads");
    ObjectiveResult r;
    for (std::size_t k = 0; k < horizons.size(); ++k) {
        repair_crossing(forecast.heads[k].values);
        const auto target = TargetBundle::from_values(normalize(targets[k], stats), horizons[k]);
        r.head_losses.push_back(horizon_loss(forecast.heads[k].values, target, Q));
    }
    for (double l : r.head_losses) r.loss += l;
    r.loss /= static_cast<double>(r.head_losses.size());
    return r;
}

// ---------------------------------------------------------------- fusion reference

struct FusionInputs {
    Eigen::MatrixXd H;    // n x D hidden states
    Eigen::MatrixXd E;    // M x D description prior
    Eigen::VectorXd g;    // D gate logits
    Eigen::MatrixXd W_q;  // D x D
    Eigen::MatrixXd W_k;
    Eigen::MatrixXd W_v;
    Eigen::VectorXd gain;  // D
    Eigen::VectorXd bias;  // D
};

inline constexpr double kLayerNormEps = 1e-5;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const Eigen::RowVectorXd e = (logits.row(r).array() - logits.row(r).maxCoeff()).exp();
        out.row(r) = e / e.sum();
    }
    return out;
}

inline Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& X, const Eigen::VectorXd& gain, const Eigen::VectorXd& bias,
                                  double eps = kLayerNormEps) {
    Eigen::MatrixXd out(X.rows(), X.cols());
    const double D = static_cast<double>(X.cols());
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        const double mean = X.row(r).mean();
        const Eigen::RowVectorXd centered = X.row(r).array() - mean;
        const double var = centered.squaredNorm() / D;
        out.row(r) = (centered.array() / std::sqrt(var + eps)) * gain.transpose().array() + bias.transpose().array();
    }
    return out;
}

/// softmax((H Wq)(E Wk)^T / sqrt(D)) (E Wv), single head.
inline Eigen::MatrixXd cross_attention(const FusionInputs& in) {
    const double D = static_cast<double>(in.H.cols());
    const Eigen::MatrixXd q = in.H * in.W_q, k = in.E * in.W_k, v = in.E * in.W_v;
    return row_softmax(q * k.transpose() / std::sqrt(D)) * v;
}

/// LN(H + sigmoid(g) * CA(H, E)), gate broadcast over rows.
inline Eigen::MatrixXd gated_fusion_forward(const FusionInputs& in) {
    const auto D = in.H.cols();
    require(D >= 1 && in.H.rows() >= 1, ErrorCode::Shape, "hidden matrix must be non-empty");
    require(in.E.cols() == D && in.E.rows() >= 1, ErrorCode::Shape, "prior must be M x D with M >= 1");
    require(in.g.size() == D && in.gain.size() == D && in.bias.size() == D, ErrorCode::Shape,
            "gate, gain and bias must have D entries");
    for (const auto* W : {&in.W_q, &in.W_k, &in.W_v})
        require(W->rows() == D && W->cols() == D, ErrorCode::Shape, "attention weights must be D x D");
    const Eigen::RowVectorXd gate = in.g.unaryExpr([](double x) { return sigmoid(x); }).transpose();
    const Eigen::MatrixXd ca = cross_attention(in);
    const Eigen::MatrixXd mixed = in.H + (ca.array().rowwise() * gate.array()).matrix();
    return layer_norm(mixed, in.gain, in.bias);
}

}  // namespace tsagent
