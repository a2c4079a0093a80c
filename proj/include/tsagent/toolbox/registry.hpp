#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tsagent/error.hpp"
#include "tsagent/json.hpp"
#include "tsagent/series.hpp"
#include "tsagent/toolbox/adf.hpp"
#include "tsagent/toolbox/cwt.hpp"
#include "tsagent/toolbox/features.hpp"
#include "tsagent/toolbox/spectral.hpp"

namespace tsagent::tools {

enum class Category { Trend, Volatility, Distribution, Periodicity, Extrema, Frequency, Dynamics };

constexpr std::string_view to_string(Category c) {
    switch (c) {
        case Category::Trend: return "Trend";
        case Category::Volatility: return "Volatility";
        case Category::Distribution: return "Distribution";
        case Category::Periodicity: return "Periodicity";
        case Category::Extrema: return "Extrema";
        case Category::Frequency: return "Frequency";
        case Category::Dynamics: return "Dynamics";
    }
    return "";
}

enum class ParamKind { Int, Real, RealList, IntList, Enum, Bool };

struct ParamSpec {
    std::string name;
    ParamKind kind = ParamKind::Int;
    bool required = true;
    std::string description;
    std::optional<double> minimum;
    std::optional<double> maximum;
    std::vector<std::string> choices;  // Enum only
};

using Payload = std::vector<std::pair<std::string, double>>;

struct ToolSpec {
    std::string name;
    Category category = Category::Trend;
    std::string description;
    std::vector<ParamSpec> parameters;  // left/right first
    std::function<Payload(std::span<const double>, const Json&)> run;
};

struct ToolFailure {
    ErrorCode code;
    std::string message;
};

/// Result of one tool invocation: a flat numeric payload or an error record.
struct ToolOutcome {
    std::string name;
    Window window;
    Payload payload;
    std::optional<ToolFailure> error;

    bool ok() const { return !error.has_value(); }

    /// Observation JSON as fed back to the agent.
    Json to_json() const {
        Json j = Json::object();
        if (error) {
            j["error"] = {{"code", std::string(to_string(error->code))}, {"message", error->message}};
            return j;
        }
        for (const auto& [k, v] : payload) j[k] = v;
        return j;
    }
};

namespace detail {

inline const Json& arg(const Json& args, const char* name) {
    return args.at(name);  // presence validated before dispatch
}

inline long long as_int(const Json& args, const char* name) { return arg(args, name).get<long long>(); }
inline double as_real(const Json& args, const char* name) { return arg(args, name).get<double>(); }
inline bool as_bool(const Json& args, const char* name) { return arg(args, name).get<bool>(); }
inline std::string as_enum(const Json& args, const char* name) { return arg(args, name).get<std::string>(); }
inline std::vector<long long> as_int_list(const Json& args, const char* name) {
    return arg(args, name).get<std::vector<long long>>();
}

inline Payload scalar(double v) { return {{"value", v}}; }

inline Aggregation aggregation(const std::string& s) {
    if (s == "mean") return Aggregation::Mean;
    if (s == "median") return Aggregation::Median;
    return Aggregation::Var;
}

inline ParamSpec int_param(std::string name, std::string desc, std::optional<double> min = std::nullopt) {
    return {std::move(name), ParamKind::Int, true, std::move(desc), min, std::nullopt, {}};
}
inline ParamSpec real_param(std::string name, std::string desc, std::optional<double> min,
                            std::optional<double> max) {
    return {std::move(name), ParamKind::Real, true, std::move(desc), min, max, {}};
}
inline ParamSpec enum_param(std::string name, std::string desc, std::vector<std::string> choices) {
    return {std::move(name), ParamKind::Enum, true, std::move(desc), std::nullopt, std::nullopt, std::move(choices)};
}
inline ParamSpec bool_param(std::string name, std::string desc) {
    return {std::move(name), ParamKind::Bool, true, std::move(desc), std::nullopt, std::nullopt, {}};
}
inline ParamSpec int_list_param(std::string name, std::string desc) {
    return {std::move(name), ParamKind::IntList, true, std::move(desc), 0.0, std::nullopt, {}};
}

inline std::vector<ParamSpec> with_window(std::vector<ParamSpec> extra) {
    std::vector<ParamSpec> p{
        int_param("left", "Inclusive start index of the window."),
        int_param("right", "Exclusive end index of the window (right is exclusive)."),
    };
    p.insert(p.end(), std::make_move_iterator(extra.begin()), std::make_move_iterator(extra.end()));
    return p;
}

inline std::vector<ToolSpec> build_specs() {
    using C = Category;
    std::vector<ToolSpec> s;
    auto add = [&](std::string name, C cat, std::string desc, std::vector<ParamSpec> params,
                   std::function<Payload(std::span<const double>, const Json&)> fn) {
        s.push_back({std::move(name), cat, std::move(desc), with_window(std::move(params)), std::move(fn)});
    };

    add("linear_trend", C::Trend,
        "Ordinary least-squares line of the window values against their position (0, 1, ...). "
        "Returns slope, intercept, rvalue, pvalue and stderr.",
        {}, [](auto xs, const Json&) {
            const auto t = linear_trend(xs);
            return Payload{{"slope", t.slope},
                           {"intercept", t.intercept},
                           {"rvalue", t.rvalue},
                           {"pvalue", t.pvalue},
                           {"stderr", t.stderr_}};
        });

    add("standard_deviation", C::Volatility, "Population standard deviation of the window.", {},
        [](auto xs, const Json&) { return scalar(standard_deviation(xs)); });
    add("mean_abs_change", C::Volatility, "Mean absolute difference between consecutive values.", {},
        [](auto xs, const Json&) { return scalar(mean_abs_change(xs)); });
    add("absolute_sum_of_changes", C::Volatility, "Sum of absolute differences between consecutive values.", {},
        [](auto xs, const Json&) { return scalar(absolute_sum_of_changes(xs)); });
    add("ratio_beyond_r_sigma", C::Volatility,
        "Fraction of values farther than r standard deviations from the window mean.",
        {real_param("r", "Distance threshold in standard deviations.", 0.0, std::nullopt)},
        [](auto xs, const Json& a) { return scalar(ratio_beyond_r_sigma(xs, as_real(a, "r"))); });

    add("change_quantiles", C::Distribution,
        "Restricts the window to the corridor between its q_l and q_h quantiles and aggregates the "
        "consecutive changes whose both endpoints fall inside the corridor (0 if none).",
        {real_param("q_l", "Lower corridor quantile.", 0.0, 1.0),
         real_param("q_h", "Upper corridor quantile, greater than q_l.", 0.0, 1.0),
         bool_param("is_abs", "Take absolute values of the changes."),
         enum_param("agg", "Aggregation applied to the kept changes.", {"mean", "var"})},
        [](auto xs, const Json& a) {
            return scalar(change_quantiles(xs, as_real(a, "q_l"), as_real(a, "q_h"), as_bool(a, "is_abs"),
                                           aggregation(as_enum(a, "agg"))));
        });
    add("quantile", C::Distribution, "The q quantile of the window (linear interpolation).",
        {real_param("q", "Quantile level.", 0.0, 1.0)},
        [](auto xs, const Json& a) { return scalar(quantile(xs, as_real(a, "q"))); });

    add("agg_autocorrelation", C::Periodicity,
        "Aggregate (mean, median or var) of the autocorrelations at lags 1..min(maxlag, n-1).",
        {int_param("maxlag", "Largest lag included.", 1.0),
         enum_param("agg", "Aggregation over lags.", {"mean", "median", "var"})},
        [](auto xs, const Json& a) {
            return scalar(agg_autocorrelation(xs, as_int(a, "maxlag"), aggregation(as_enum(a, "agg"))));
        });
    add("autocorrelation", C::Periodicity,
        "Autocorrelation at the given lag, normalised by the window variance and the number of pairs.",
        {int_param("lag", "Lag in steps.", 0.0)},
        [](auto xs, const Json& a) { return scalar(autocorrelation(xs, as_int(a, "lag"))); });

    auto loc = [&](std::string name, Occurrence w, Extremum k, std::string desc) {
        add(std::move(name), C::Extrema, std::move(desc), {},
            [w, k](auto xs, const Json&) { return scalar(extreme_location(xs, w, k)); });
    };
    loc("first_location_of_maximum", Occurrence::First, Extremum::Max,
        "Position of the first maximum relative to the window length.");
    loc("first_location_of_minimum", Occurrence::First, Extremum::Min,
        "Position of the first minimum relative to the window length.");
    loc("last_location_of_maximum", Occurrence::Last, Extremum::Max,
        "One past the position of the last maximum, relative to the window length.");
    loc("last_location_of_minimum", Occurrence::Last, Extremum::Min,
        "One past the position of the last minimum, relative to the window length.");
    add("longest_strike_above_mean", C::Extrema, "Length of the longest run strictly above the window mean.", {},
        [](auto xs, const Json&) { return scalar(longest_strike(xs, Relation::Above)); });
    add("longest_strike_below_mean", C::Extrema, "Length of the longest run strictly below the window mean.", {},
        [](auto xs, const Json&) { return scalar(longest_strike(xs, Relation::Below)); });
    add("mean_n_absolute_max", C::Extrema, "Mean of the n largest absolute values.",
        {int_param("n", "How many absolute maxima to average.", 1.0)},
        [](auto xs, const Json& a) { return scalar(mean_n_absolute_max(xs, as_int(a, "n"))); });
    add("number_cwt_peaks", C::Extrema,
        "Number of peaks that persist across Ricker-wavelet smoothings of widths 1..max_width with "
        "sufficient signal-to-noise ratio.",
        {int_param("max_width", "Largest wavelet width.", 1.0)},
        [](auto xs, const Json& a) { return scalar(number_cwt_peaks(xs, as_int(a, "max_width"))); });
    add("number_peaks", C::Extrema,
        "Number of values strictly greater than their n neighbours on each side.",
        {int_param("n", "Peak support on each side.", 1.0)},
        [](auto xs, const Json& a) { return scalar(number_peaks(xs, as_int(a, "n"))); });

    add("fft_coefficient", C::Frequency,
        "Selected coefficients of the real-input discrete Fourier transform: real part, imaginary part, "
        "magnitude or phase angle in degrees. Window must not contain missing values.",
        {int_list_param("coeffs", "Coefficient indices in 0..floor(n/2)."),
         enum_param("attr", "Attribute to report.", {"real", "imag", "abs", "angle"})},
        [](auto xs, const Json& a) {
            const auto attr = as_enum(a, "attr");
            const FftAttr f = attr == "real"   ? FftAttr::Real
                              : attr == "imag" ? FftAttr::Imag
                              : attr == "abs"  ? FftAttr::Abs
                                               : FftAttr::Angle;
            const auto coeffs = as_int_list(a, "coeffs");
            return fft_coefficient(xs, coeffs, f);
        });
    add("fourier_entropy", C::Frequency,
        "Entropy of the Welch power spectral density, normalised by its maximum and binned on [0, 1].",
        {int_param("bins", "Number of equal-width bins.", 1.0)},
        [](auto xs, const Json& a) { return scalar(fourier_entropy(xs, as_int(a, "bins"))); });
    add("spkt_welch_density", C::Frequency,
        "Welch power spectral density at the requested frequency-bin indices (Hann window, 50% overlap, "
        "segments of up to 256 points).",
        {int_list_param("coeffs", "Frequency-bin indices in 0..floor(segment/2).")},
        [](auto xs, const Json& a) {
            const auto coeffs = as_int_list(a, "coeffs");
            return spkt_welch_density(xs, coeffs);
        });

    add("augmented_dickey_fuller", C::Dynamics,
        "Augmented Dickey-Fuller unit-root test statistic (constant term, AIC lag selection). More negative "
        "values are stronger evidence against a unit root.",
        {}, [](auto xs, const Json&) { return scalar(augmented_dickey_fuller(xs)); });
    add("cid_ce", C::Dynamics,
        "Complexity estimate: square root of the summed squared consecutive differences, optionally after "
        "z-normalisation.",
        {bool_param("normalize", "Z-normalise the window first.")},
        [](auto xs, const Json& a) { return scalar(cid_ce(xs, as_bool(a, "normalize"))); });

    std::stable_sort(s.begin(), s.end(), [](const ToolSpec& a, const ToolSpec& b) {
        if (a.category != b.category) return a.category < b.category;
        return a.name < b.name;
    });
    return s;
}

inline void validate_argument(const ParamSpec& p, const Json& v) {
    const std::string where = "argument '" + p.name + "'";
    auto check_range = [&](double x) {
        require(!p.minimum || x >= *p.minimum, ErrorCode::BadParam, where + " below minimum");
        require(!p.maximum || x <= *p.maximum, ErrorCode::BadParam, where + " above maximum");
    };
    auto is_integer = [](const Json& x) {
        if (x.is_number_integer()) return true;
        if (!x.is_number_float()) return false;
        const double d = x.get<double>();
        return std::isfinite(d) && std::floor(d) == d;
    };
    switch (p.kind) {
        case ParamKind::Int:
            require(is_integer(v), ErrorCode::BadParam, where + " must be an integer");
            check_range(v.get<double>());
            break;
        case ParamKind::Real:
            require(v.is_number(), ErrorCode::BadParam, where + " must be a number");
            check_range(v.get<double>());
            break;
        case ParamKind::Bool:
            require(v.is_boolean(), ErrorCode::BadParam, where + " must be a boolean");
            break;
        case ParamKind::Enum:
            require(v.is_string() && std::find(p.choices.begin(), p.choices.end(), v.get<std::string>()) !=
                                         p.choices.end(),
                    ErrorCode::BadParam, where + " must be one of the listed choices");
            break;
        case ParamKind::IntList:
        case ParamKind::RealList:
            require(v.is_array() && !v.empty(), ErrorCode::BadParam, where + " must be a non-empty array");
            for (const auto& e : v) {
                require(p.kind == ParamKind::IntList ? is_integer(e) : e.is_number(), ErrorCode::BadParam,
                        where + " has an element of the wrong type");
                check_range(e.get<double>());
            }
            break;
    }
}

// Integral floats such as 3.0 are accepted and normalised to integers.
inline Json normalized_arguments(const ToolSpec& spec, const Json& args) {
    Json out = Json::object();
    for (const auto& p : spec.parameters) {
        const Json& v = args.at(p.name);
        if (p.kind == ParamKind::Int) {
            out[p.name] = static_cast<long long>(v.get<double>());
        } else if (p.kind == ParamKind::IntList) {
            Json arr = Json::array();
            for (const auto& e : v) arr.push_back(static_cast<long long>(e.get<double>()));
            out[p.name] = arr;
        } else {
            out[p.name] = v;
        }
    }
    return out;
}

}  // namespace detail

/// The immutable set of registered tools, ordered by category then name.
class Toolbox {
public:
    Toolbox() : specs_(detail::build_specs()) {}

    const std::vector<ToolSpec>& specs() const noexcept { return specs_; }

    const ToolSpec* find(std::string_view name) const {
        for (const auto& s : specs_)
            if (s.name == name) return &s;
        return nullptr;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& s : specs_) out.push_back(s.name);
        return out;
    }

    /// Runs a tool; every failure is captured in the outcome's error record.
    ToolOutcome run(const Series& series, std::string_view name, const Json& arguments) const {
        ToolOutcome out;
        out.name = std::string(name);
        try {
            const ToolSpec* spec = find(name);
            require(spec != nullptr, ErrorCode::UnknownTool, "unknown tool '" + std::string(name) + "'");
            require(arguments.is_object(), ErrorCode::BadParam, "arguments must be a JSON object");
            for (const auto& p : spec->parameters) {
                require(arguments.contains(p.name), ErrorCode::BadParam,
                        "missing required argument '" + p.name + "'");
                detail::validate_argument(p, arguments.at(p.name));
            }
            for (const auto& [key, value] : arguments.items()) {
                const bool known = std::any_of(spec->parameters.begin(), spec->parameters.end(),
                                               [&](const ParamSpec& p) { return p.name == key; });
                require(known, ErrorCode::BadParam, "unexpected argument '" + key + "'");
            }
            const Json args = detail::normalized_arguments(*spec, arguments);
            const long long left = args.at("left").get<long long>();
            const long long right = args.at("right").get<long long>();
            require(left >= 0 && right >= 0, ErrorCode::OutOfBounds, "window bounds must be non-negative");
            out.window = {static_cast<std::size_t>(left), static_cast<std::size_t>(right)};
            out.payload = spec->run(slice(series, out.window), args);
        } catch (const Error& e) {
            out.payload.clear();
            out.error = ToolFailure{e.code(), e.what()};
        } catch (const std::exception& e) {
            out.payload.clear();
            out.error = ToolFailure{ErrorCode::BadParam, e.what()};
        }
        return out;
    }

    /// OpenAI-compatible function schemas, one per tool.
    Json schemas() const {
        Json arr = Json::array();
        for (const auto& s : specs_) arr.push_back(schema(s));
        return arr;
    }

    static Json schema(const ToolSpec& s) {
        Json props = Json::object();
        Json required = Json::array();
        for (const auto& p : s.parameters) {
            Json prop = Json::object();
            switch (p.kind) {
                case ParamKind::Int: prop["type"] = "integer"; break;
                case ParamKind::Real: prop["type"] = "number"; break;
                case ParamKind::Bool: prop["type"] = "boolean"; break;
                case ParamKind::Enum:
                    prop["type"] = "string";
                    prop["enum"] = p.choices;
                    break;
                case ParamKind::IntList:
                case ParamKind::RealList:
                    prop["type"] = "array";
                    prop["items"] = {{"type", p.kind == ParamKind::IntList ? "integer" : "number"}};
                    if (p.minimum) prop["items"]["minimum"] = *p.minimum;
                    prop["minItems"] = 1;
                    break;
            }
            if (p.kind == ParamKind::Int || p.kind == ParamKind::Real) {
                if (p.minimum) prop["minimum"] = *p.minimum;
                if (p.maximum) prop["maximum"] = *p.maximum;
            }
            prop["description"] = p.description;
            props[p.name] = prop;
            if (p.required) required.push_back(p.name);
        }
        Json params = {{"type", "object"},
                       {"properties", props},
                       {"required", required},
                       {"additionalProperties", false}};
        return {{"type", "function"},
                {"function",
                 {{"name", s.name},
                  {"description", std::string(to_string(s.category)) + ". " + s.description},
                  {"parameters", params}}}};
    }

private:
    std::vector<ToolSpec> specs_;
};

}  // namespace tsagent::tools
