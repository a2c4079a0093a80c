#pragma once

// Corpus construction: window selection under a sample budget, metadata
// masking, judge-based quality control and the generate/judge/retry loop.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tsagent/agent.hpp"
#include "tsagent/error.hpp"
#include "tsagent/gateway.hpp"
#include "tsagent/json.hpp"
#include "tsagent/prompts.hpp"

namespace tsagent {

// ---------------------------------------------------------------- windowing

struct WindowBudgetConfig {
    std::size_t L = 2048;
    std::size_t H_s = 96;
    std::size_t H_l = 720;
    std::size_t d = 512;
    std::size_t B_max = 5000;
    std::size_t B_min = 500;
    std::vector<std::size_t> fallback_strides{256, 128, 64};

    void validate() const {
        require(L >= 1, ErrorCode::BadConfig, "L must be >= 1");
        require(H_s >= 1 && H_s <= H_l, ErrorCode::BadConfig, "horizons must satisfy 1 <= H_s <= H_l");
        require(d >= 1, ErrorCode::BadConfig, "stride must be >= 1");
        require(B_max >= 1, ErrorCode::BadConfig, "B_max must be >= 1");
        std::size_t prev = d;
        for (std::size_t s : fallback_strides) {
            require(s >= 1 && s < prev, ErrorCode::BadConfig,
                    "fallback strides must be positive and strictly decreasing below the default stride");
            prev = s;
        }
    }
};

enum class WindowKind { Sliding, MaxLength };

struct WindowSpec {
    std::string dataset;
    std::string series_id;
    std::size_t hist_start = 0;
    std::size_t hist_len = 0;
    std::size_t short_start = 0;
    std::size_t short_len = 0;
    std::size_t long_start = 0;
    std::size_t long_len = 0;
    WindowKind kind = WindowKind::Sliding;
    bool metadata_masked = false;

    std::string sample_id() const { return dataset + ":" + series_id + ":" + std::to_string(hist_start); }
    std::size_t end() const { return long_start + long_len; }

    friend bool operator==(const WindowSpec&, const WindowSpec&) = default;

    Json to_json() const {
        return {{"sample_id", sample_id()},
                {"dataset", dataset},
                {"series_id", series_id},
                {"hist_start", hist_start},
                {"hist_len", hist_len},
                {"short_start", short_start},
                {"short_len", short_len},
                {"long_start", long_start},
                {"long_len", long_len},
                {"kind", kind == WindowKind::Sliding ? "sliding" : "max_length"},
                {"metadata_masked", metadata_masked}};
    }

    static WindowSpec from_json(const Json& j) {
        try {
            WindowSpec w;
            w.dataset = j.at("dataset").get<std::string>();
            w.series_id = j.at("series_id").get<std::string>();
            w.hist_start = j.at("hist_start").get<std::size_t>();
            w.hist_len = j.at("hist_len").get<std::size_t>();
            w.short_start = j.at("short_start").get<std::size_t>();
            w.short_len = j.at("short_len").get<std::size_t>();
            w.long_start = j.at("long_start").get<std::size_t>();
            w.long_len = j.at("long_len").get<std::size_t>();
            const auto kind = j.at("kind").get<std::string>();
            require(kind == "sliding" || kind == "max_length", ErrorCode::Schema, "unknown window kind " + kind);
            w.kind = kind == "sliding" ? WindowKind::Sliding : WindowKind::MaxLength;
            w.metadata_masked = j.value("metadata_masked", false);
            return w;
        } catch (const Json::exception& e) {
            fail(ErrorCode::Schema, std::string("bad window spec: ") + e.what());
        }
    }
};

struct SeriesLength {
    std::string id;
    std::size_t length = 0;
};

struct WindowingResult {
    std::vector<WindowSpec> windows;
    std::size_t stride = 0;        // stride that produced the sliding windows
    std::size_t uncapped = 0;      // candidate count before the budget cap
    bool capped = false;
    std::vector<std::string> warnings;
};

/// Splits `budget` over series with candidate counts `counts`, proportional to
/// sqrt(count) but never above a series' own count. The shares are settled by
/// water-filling and rounded by largest remainder, so they sum to
/// min(budget, total) exactly.
inline std::vector<std::size_t> allocate_budgets(const std::vector<std::size_t>& counts, std::size_t budget) {
    const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    if (total <= budget) return counts;

    std::vector<std::size_t> out(counts.size(), 0);
    std::vector<bool> fixed(counts.size(), false);
    for (std::size_t i = 0; i < counts.size(); ++i) fixed[i] = counts[i] == 0;
    std::size_t remaining = budget;
    std::vector<double> quota(counts.size(), 0.0);
    for (bool changed = true; changed;) {
        changed = false;
        double weight = 0.0;
        for (std::size_t i = 0; i < counts.size(); ++i)
            if (!fixed[i]) weight += std::sqrt(static_cast<double>(counts[i]));
        for (std::size_t i = 0; i < counts.size(); ++i)
            if (!fixed[i]) quota[i] = static_cast<double>(remaining) * std::sqrt(static_cast<double>(counts[i])) / weight;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            if (fixed[i]) continue;
            if (quota[i] >= static_cast<double>(counts[i])) {
                fixed[i] = true;
                out[i] = counts[i];
                remaining -= counts[i];
                changed = true;
            }
        }
    }

    std::vector<std::size_t> open;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (fixed[i]) continue;
        out[i] = static_cast<std::size_t>(std::floor(quota[i]));
        assigned += out[i];
        open.push_back(i);
    }
    std::stable_sort(open.begin(), open.end(), [&](std::size_t a, std::size_t b) {
        return quota[a] - std::floor(quota[a]) > quota[b] - std::floor(quota[b]);
    });
    for (std::size_t k = 0; assigned < remaining && k < open.size(); ++k, ++assigned) ++out[open[k]];
    return out;
}

/// k * s / b for k < b: evenly spread picks from s candidates.
inline std::vector<std::size_t> even_subsample(std::size_t s, std::size_t b) {
    std::vector<std::size_t> idx;
    idx.reserve(b);
    for (std::size_t k = 0; k < b; ++k) idx.push_back(k * s / b);
    return idx;
}

namespace detail {

inline std::vector<std::vector<WindowSpec>> candidate_windows(const std::string& dataset,
                                                              const std::vector<SeriesLength>& series,
                                                              const WindowBudgetConfig& c, std::size_t stride) {
    std::vector<std::vector<WindowSpec>> out(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        const std::size_t n = series[i].length;
        if (n < c.H_s + c.H_l) continue;
        auto make = [&](std::size_t start, std::size_t len, WindowKind kind) {
            return WindowSpec{dataset, series[i].id, start, len, start + len, c.H_s, start + len, c.H_l, kind, false};
        };
        if (n < c.L + c.H_l) {
            out[i].push_back(make(0, n - c.H_l, WindowKind::MaxLength));
            continue;
        }
        for (std::size_t a = 0; a + c.L + c.H_l <= n; a += stride) out[i].push_back(make(a, c.L, WindowKind::Sliding));
    }
    return out;
}

inline std::size_t total_size(const std::vector<std::vector<WindowSpec>>& per_series) {
    std::size_t t = 0;
    for (const auto& v : per_series) t += v.size();
    return t;
}

}  // namespace detail

/// Candidate windows for the series of one dataset.
inline WindowingResult generate_windows(const std::string& dataset, const std::vector<SeriesLength>& series,
                                        const WindowBudgetConfig& config) {
    config.validate();
    WindowingResult r;
    r.stride = config.d;
    auto per_series = detail::candidate_windows(dataset, series, config, config.d);
    std::size_t total = detail::total_size(per_series);

    if (total < config.B_min && total > 0) {
        for (std::size_t stride : config.fallback_strides) {
            per_series = detail::candidate_windows(dataset, series, config, stride);
            total = detail::total_size(per_series);
            r.stride = stride;
            if (total >= config.B_min) break;
        }
        if (total < config.B_min)
            r.warnings.push_back(dataset + ": only " + std::to_string(total) + " windows after all fallback strides (B_min " +
                                 std::to_string(config.B_min) + ")");
    }
    r.uncapped = total;

    std::vector<std::size_t> counts;
    for (const auto& v : per_series) counts.push_back(v.size());
    const auto budgets = allocate_budgets(counts, config.B_max);
    r.capped = total > config.B_max;
    for (std::size_t i = 0; i < per_series.size(); ++i)
        for (std::size_t k : even_subsample(counts[i], budgets[i])) r.windows.push_back(per_series[i][k]);
    return r;
}

// ---------------------------------------------------------------- masking

/// Marks floor(fraction * count) windows of every dataset as metadata-masked.
/// The choice ranks windows by SHA-256 of "seed:dataset:sample_id", so it is
/// stable across runs and input order, and reapplying it changes nothing.
inline void mask_metadata(std::vector<WindowSpec>& windows, double fraction, long long seed) {
    require(fraction >= 0.0 && fraction <= 1.0, ErrorCode::BadParam, "mask fraction must lie in [0, 1]");
    std::map<std::string, std::vector<std::pair<std::string, std::size_t>>> by_dataset;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const auto& w = windows[i];
        by_dataset[w.dataset].push_back(
            {sha256_hex(std::to_string(seed) + ":" + w.dataset + ":" + w.sample_id()), i});
    }
    for (auto& [name, ranked] : by_dataset) {
        std::sort(ranked.begin(), ranked.end());
        const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(ranked.size()) + 1e-9));
        for (std::size_t k = 0; k < ranked.size(); ++k) windows[ranked[k].second].metadata_masked = k < count;
    }
}

// ---------------------------------------------------------------- datasets

struct SeriesData {
    std::vector<std::string> timestamps;
    std::vector<double> values;
};

struct DatasetSource {
    std::string name;
    std::string csv_path;
    std::string metadata_path;
    std::vector<SeriesLength> series;  // from the manifest, or measured from the CSV
};

struct Manifest {
    std::vector<DatasetSource> datasets;

    /// Relative paths are resolved against the manifest's directory.
    static Manifest load(const std::string& path) {
        const Json j = read_json_file(path);
        const auto base = std::filesystem::path(path).parent_path();
        auto resolve = [&](const std::string& p) {
            if (p.empty()) return p;
            const std::filesystem::path fp(p);
            return (fp.is_absolute() ? fp : base / fp).string();
        };
        Manifest m;
        try {
            require(j.is_object() && j.contains("datasets") && j["datasets"].is_array(), ErrorCode::Schema,
                    path + ": manifest needs a datasets array");
            for (const auto& d : j["datasets"]) {
                DatasetSource src;
                src.name = d.at("name").get<std::string>();
                src.csv_path = resolve(d.value("csv", ""));
                src.metadata_path = resolve(d.value("metadata", ""));
                if (d.contains("series"))
                    for (const auto& s : d["series"])
                        src.series.push_back({s.at("id").get<std::string>(), s.at("length").get<std::size_t>()});
                m.datasets.push_back(std::move(src));
            }
        } catch (const Json::exception& e) {
            fail(ErrorCode::Schema, path + ": " + e.what());
        }
        return m;
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

inline double parse_value(const std::string& s, const std::string& where) {
    if (s.empty() || s == "nan" || s == "NaN" || s == "NA") return std::nan("");
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        require(used == s.size(), ErrorCode::Parse, where + ": bad number '" + s + "'");
        return v;
    } catch (const std::logic_error&) {
        fail(ErrorCode::Parse, where + ": bad number '" + s + "'");
    }
}

}  // namespace detail

/// Long-format CSV with header series_id,timestamp,value; rows of a series in time order.
inline std::map<std::string, SeriesData> read_series_csv(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorCode::Parse, path + ": empty file");
    const auto header = detail::split_csv_line(line);
    auto col = [&](const char* name) {
        const auto it = std::find(header.begin(), header.end(), name);
        require(it != header.end(), ErrorCode::Parse, path + ": missing column " + name);
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t c_id = col("series_id"), c_ts = col("timestamp"), c_v = col("value");
    std::map<std::string, SeriesData> out;
    for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
        if (line.empty() || line == "\r") continue;
        const auto f = detail::split_csv_line(line);
        const std::string where = path + ":" + std::to_string(lineno);
        require(f.size() == header.size(), ErrorCode::Parse, where + ": wrong field count");
        auto& s = out[f[c_id]];
        s.timestamps.push_back(f[c_ts]);
        s.values.push_back(detail::parse_value(f[c_v], where));
    }
    return out;
}

/// Sidecar JSONL: one object per series with "series_id" plus metadata fields.
/// A line without series_id supplies dataset-wide defaults.
inline std::map<std::string, SampleMetadata> read_metadata_sidecar(const std::string& path) {
    std::map<std::string, SampleMetadata> out;
    if (path.empty()) return out;
    Json defaults = Json::object();
    std::vector<Json> lines = read_jsonl(path);
    for (const auto& l : lines)
        if (!l.contains("series_id")) defaults.update(l);
    for (const auto& l : lines) {
        if (!l.contains("series_id")) continue;
        Json merged = defaults;
        merged.update(l);
        out[l["series_id"].get<std::string>()] = SampleMetadata::from_json(merged);
    }
    out[""] = SampleMetadata::from_json(defaults);
    return out;
}

struct LoadedDataset {
    DatasetSource source;
    std::map<std::string, SeriesData> series;
    std::map<std::string, SampleMetadata> metadata;

    static LoadedDataset load(const DatasetSource& src) {
        LoadedDataset d{src, read_series_csv(src.csv_path), read_metadata_sidecar(src.metadata_path)};
        if (d.source.series.empty())
            for (const auto& [id, s] : d.series) d.source.series.push_back({id, s.values.size()});
        return d;
    }

    SampleMetadata metadata_for(const std::string& series_id) const {
        if (auto it = metadata.find(series_id); it != metadata.end()) return it->second;
        if (auto it = metadata.find(""); it != metadata.end()) return it->second;
        return {};
    }

    SampleContext sample(const WindowSpec& w) const {
        const auto it = series.find(w.series_id);
        require(it != series.end(), ErrorCode::Schema, "series " + w.series_id + " not found in " + source.csv_path);
        require(w.end() <= it->second.values.size(), ErrorCode::OutOfBounds, "window exceeds series " + w.series_id);
        SampleContext s;
        s.sample_id = w.sample_id();
        s.series_id = w.series_id;
        s.values = it->second.values;
        s.timestamps = it->second.timestamps;
        s.history = {w.hist_start, w.hist_start + w.hist_len};
        s.horizon_short = w.short_len;
        s.horizon_long = w.long_len;
        s.metadata = metadata_for(w.series_id);
        if (s.metadata.dataset == kUnavailable) s.metadata.dataset = source.name;
        s.derive_times();
        if (w.metadata_masked) s.mask();
        return s;
    }
};

// ---------------------------------------------------------------- quality control

enum class QcCheck { MetadataLeak, ReasoningUsage, ForecastAccuracy };

inline std::string_view to_string(QcCheck c) {
    switch (c) {
        case QcCheck::MetadataLeak: return "metadata_leak";
        case QcCheck::ReasoningUsage: return "reasoning_usage";
        case QcCheck::ForecastAccuracy: return "forecast_accuracy";
    }
    return "";
}

inline constexpr std::size_t kMaxEvidenceWords = 60;

struct QcVerdict {
    QcCheck check = QcCheck::MetadataLeak;
    bool pass = false;
    std::string evidence;
    int attempt = 1;
    bool malformed = false;

    Json to_json() const {
        return {{"check", std::string(to_string(check))},
                {"pass", pass},
                {"evidence", evidence},
                {"attempt", attempt},
                {"malformed", malformed}};
    }
};

/// Strict verdict parsing: a JSON object with boolean "pass" and string
/// "evidence" of at most 60 words. Anything else is a malformed failure.
inline QcVerdict parse_verdict(QcCheck check, const std::string& text, int attempt) {
    QcVerdict v{check, false, "malformed", attempt, true};
    Json j;
    try {
        j = parse_json(text);
    } catch (const Error&) {
        return v;
    }
    if (!j.is_object() || !j.contains("pass") || !j["pass"].is_boolean() || !j.contains("evidence") ||
        !j["evidence"].is_string())
        return v;
    const auto evidence = j["evidence"].get<std::string>();
    if (detail::count_words(evidence) > kMaxEvidenceWords) return v;
    return {check, j["pass"].get<bool>(), evidence, attempt, false};
}

struct JudgeConfig {
    std::string model = "default";
    double temperature = 0.0;
    std::optional<long long> max_tokens;
};

/// The context block handed to the judges. Masked samples show only the marker.
inline std::string metadata_context(const SampleRecord& s) {
    if (s.metadata_masked) return "Metadata availability: unavailable";
    const auto& m = s.metadata;
    return "Dataset: " + m.dataset + "; Domain: " + m.domain + "; Frequency: " + m.freq +
           "; Dataset description: " + m.dataset_description + "; Variable name: " + m.var_name +
           "; Variable description: " + m.var_desc + "; Unit: " + m.unit;
}

/// Conversation as plain text for the reasoning judge.
inline std::string serialize_conversation(const std::vector<ChatMessage>& messages) {
    std::string out;
    for (const auto& m : messages) {
        if (!out.empty()) out += "\n";
        out += "[" + std::string(to_string(m.role)) + "]";
        if (m.content && !m.content->empty()) out += " " + *m.content;
        for (const auto& c : m.tool_calls) out += "\n[tool_call " + c.id + "] " + c.name + " " + c.arguments;
    }
    return out;
}

inline std::string render_judge_prompt(QcCheck check, const Trajectory& t) {
    switch (check) {
        case QcCheck::MetadataLeak:
            return prompts::fill_template(prompts::kJudgeLeak, {{"forecast_text", t.final_text()},
                                                                {"metadata_context", metadata_context(t.sample)}});
        case QcCheck::ReasoningUsage:
            return prompts::fill_template(prompts::kJudgeReasoning,
                                          {{"metadata_context", metadata_context(t.sample)},
                                           {"messages_text", serialize_conversation(t.messages)}});
        case QcCheck::ForecastAccuracy:
            return prompts::fill_template(prompts::kJudgeAccuracy,
                                          {{"forecast_text", t.final_text()},
                                           {"future_short_text", join_numbers(t.sample.future_short, ", ")},
                                           {"future_long_text", join_numbers(t.sample.future_long, ", ")}});
    }
    return {};
}

inline CompletionRequest judge_request(const std::string& prompt, const JudgeConfig& config) {
    CompletionRequest r;
    r.model = config.model;
    r.messages = {ChatMessage::user(prompt)};
    r.temperature = config.temperature;
    r.max_tokens = config.max_tokens;
    return r;
}

/// Runs the three checks in order, stopping at the first failure.
inline std::vector<QcVerdict> run_qc(const Trajectory& t, ChatClient& judge, const JudgeConfig& config,
                                     int attempt = 1) {
    std::vector<QcVerdict> out;
    for (QcCheck check : {QcCheck::MetadataLeak, QcCheck::ReasoningUsage, QcCheck::ForecastAccuracy}) {
        CompletionResponse resp;
        try {
            resp = judge.complete(judge_request(render_judge_prompt(check, t), config));
        } catch (const Error& e) {
            if (e.code() == ErrorCode::CassetteMismatch) throw;
            if (e.code() == ErrorCode::MalformedResponse) {
                out.push_back({check, false, "malformed", attempt, true});
                return out;
            }
            fail(ErrorCode::Gateway, std::string(to_string(e.code())) + ": " + e.what());
        }
        out.push_back(parse_verdict(check, resp.message.text(), attempt));
        if (!out.back().pass) break;
    }
    return out;
}

inline bool qc_passed(const std::vector<QcVerdict>& v) {
    return v.size() == 3 && std::all_of(v.begin(), v.end(), [](const QcVerdict& x) { return x.pass; });
}

// ---------------------------------------------------------------- pipeline

struct PipelineConfig {
    RolloutConfig rollout;
    JudgeConfig judge;
    int max_retries = 3;
    int workers = 1;
};

struct SampleOutcome {
    std::string sample_id;
    std::string dataset;
    int attempts = 0;
    bool kept = false;
    std::optional<Trajectory> trajectory;  // last attempt's rollout, when it completed
    std::vector<QcVerdict> verdicts;       // every attempt, in order
    std::vector<std::string> errors;       // one per attempt that raised
    bool failed = false;                   // last attempt raised instead of being judged

    int retries() const { return std::max(0, attempts - 1); }

    Json qc_json() const {
        Json v = Json::array();
        for (const auto& x : verdicts) v.push_back(x.to_json());
        return {{"sample_id", sample_id}, {"dataset", dataset}, {"attempts", attempts}, {"retries", retries()},
                {"kept", kept},           {"verdicts", v},      {"errors", errors}};
    }
};

struct DatasetCounts {
    std::size_t windows = 0;
    std::size_t generated = 0;  // rollout attempts
    std::size_t retried = 0;    // samples needing more than one attempt
    std::size_t retries = 0;    // extra attempts in total
    std::size_t kept = 0;
    std::size_t discarded = 0;
    std::size_t failed = 0;     // discarded because the last attempt raised
    std::size_t skipped = 0;    // not started (interrupted)

    Json to_json() const {
        return {{"windows", windows}, {"generated", generated}, {"retried", retried}, {"retries", retries},
                {"kept", kept},       {"discarded", discarded}, {"failed", failed},   {"skipped", skipped}};
    }
};

struct PipelineReport {
    std::map<std::string, DatasetCounts> datasets;
    bool interrupted = false;

    DatasetCounts totals() const {
        DatasetCounts t;
        for (const auto& [_, c] : datasets) {
            t.windows += c.windows;
            t.generated += c.generated;
            t.retried += c.retried;
            t.retries += c.retries;
            t.kept += c.kept;
            t.discarded += c.discarded;
            t.failed += c.failed;
            t.skipped += c.skipped;
        }
        return t;
    }

    Json to_json() const {
        Json d = Json::object();
        for (const auto& [name, c] : datasets) d[name] = c.to_json();
        return {{"datasets", d}, {"totals", totals().to_json()}, {"interrupted", interrupted}};
    }
};

/// Rollout, judge, and retry for one sample: at most 1 + max_retries attempts.
inline SampleOutcome process_sample(const SampleContext& sample, ChatClient& agent, ChatClient& judge,
                                    const tools::Toolbox& toolbox, const PipelineConfig& config) {
    SampleOutcome o;
    o.sample_id = sample.sample_id;
    for (int attempt = 1; attempt <= 1 + config.max_retries; ++attempt) {
        o.attempts = attempt;
        o.failed = false;
        try {
            o.trajectory = run_rollout(sample, agent, toolbox, config.rollout);
            const auto verdicts = run_qc(*o.trajectory, judge, config.judge, attempt);
            o.verdicts.insert(o.verdicts.end(), verdicts.begin(), verdicts.end());
            if (qc_passed(verdicts)) {
                o.kept = true;
                return o;
            }
        } catch (const Error& e) {
            o.trajectory.reset();
            o.failed = true;
            o.errors.push_back("attempt " + std::to_string(attempt) + ": " + std::string(to_string(e.code())) + ": " +
                               e.what());
            if (e.code() == ErrorCode::CassetteMismatch) return o;  // replay cannot recover
        }
    }
    return o;
}

struct PipelineSample {
    std::string dataset;
    SampleContext context;
};

/// Processes samples with a bounded worker pool. `emit` receives outcomes in
/// input order, from the calling thread. Setting `stop` lets in-flight samples
/// finish and skips the rest.
inline PipelineReport pipeline_run(const std::vector<PipelineSample>& samples, ChatClient& agent, ChatClient& judge,
                                   const tools::Toolbox& toolbox, const PipelineConfig& config,
                                   const std::function<void(const SampleOutcome&)>& emit,
                                   const std::atomic<bool>* stop = nullptr) {
    config.rollout.validate();
    require(config.max_retries >= 0, ErrorCode::BadConfig, "max_retries must be >= 0");
    require(config.workers >= 1, ErrorCode::BadConfig, "workers must be >= 1");

    PipelineReport report;
    for (const auto& s : samples) ++report.datasets[s.dataset].windows;

    std::vector<std::optional<SampleOutcome>> results(samples.size());
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::condition_variable ready;
    auto work = [&] {
        for (;;) {
            if (stop && stop->load()) return;
            const std::size_t i = next++;
            if (i >= samples.size()) return;
            auto o = process_sample(samples[i].context, agent, judge, toolbox, config);
            o.dataset = samples[i].dataset;
            std::lock_guard lock(mu);
            results[i] = std::move(o);
            ready.notify_all();
        }
    };

    const int n_workers = std::min<int>(config.workers, static_cast<int>(std::max<std::size_t>(1, samples.size())));
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(work);

    std::atomic<int> running{n_workers};
    std::thread watcher([&] {
        for (auto& t : pool) t.join();
        std::lock_guard lock(mu);
        running = 0;
        ready.notify_all();
    });

    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::unique_lock lock(mu);
        ready.wait(lock, [&] { return results[i].has_value() || running == 0; });
        if (!results[i]) break;  // workers stopped early
        const auto o = std::move(*results[i]);
        results[i].reset();
        lock.unlock();
        auto& c = report.datasets[o.dataset];
        c.generated += static_cast<std::size_t>(o.attempts);
        c.retries += static_cast<std::size_t>(o.retries());
        if (o.attempts > 1) ++c.retried;
        if (o.kept) {
            ++c.kept;
        } else {
            ++c.discarded;
            if (o.failed) ++c.failed;
        }
        emit(o);
    }
    watcher.join();

    for (auto& [name, c] : report.datasets) {
        c.skipped = c.windows - c.kept - c.discarded;
        if (c.skipped > 0) report.interrupted = true;
    }
    return report;
}

}  // namespace tsagent
