// tsagent: command-line front end for the toolbox, corpus pipeline, rewards and evaluation.

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "tsagent/agent.hpp"
#include "tsagent/config.hpp"
#include "tsagent/corpus.hpp"
#include "tsagent/gateway.hpp"
#include "tsagent/metrics.hpp"
#include "tsagent/reward.hpp"
#include "tsagent/scoring.hpp"
#include "tsagent/toolbox/registry.hpp"

using namespace tsagent;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitToolError = 2;
constexpr int kExitPartial = 3;

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) { g_stop.store(true); }

struct Globals {
    std::string config_path;
    std::string endpoint;
    int workers = 0;
};

AppConfig load_config(const Globals& g) {
    AppConfig c = g.config_path.empty() ? AppConfig::from_json(Json::object()) : AppConfig::load(g.config_path);
    if (!g.endpoint.empty()) c.agent.url = c.judge.url = g.endpoint;
    if (g.workers > 0) c.workers = g.workers;
    return c;
}

// Writes to a file, or stdout when the path is empty or "-".
class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty() && path != "-") {
            file_.open(path, std::ios::trunc);
            require(static_cast<bool>(file_), ErrorCode::Io, "cannot write " + path);
        }
    }
    std::ostream& os() { return file_.is_open() ? file_ : std::cout; }
    void line(const Json& j) { os() << j.dump() << '\n'; }
    void close() {
        os().flush();
        require(static_cast<bool>(os()), ErrorCode::Io, "write failed");
    }

private:
    std::ofstream file_;
};

// Replay, record-through-HTTP, or plain HTTP.
class ClientHandle {
public:
    ClientHandle(const EndpointConfig& endpoint, const std::string& replay, const std::string& record) {
        require(replay.empty() || record.empty(), ErrorCode::BadConfig, "--replay and --record are exclusive");
        if (!replay.empty()) {
            base_ = std::make_unique<ReplayClient>(replay);
            return;
        }
        base_ = std::make_unique<HttpChatClient>(endpoint.http());
        if (!record.empty()) wrapper_ = std::make_unique<RecordingClient>(*base_, record);
    }
    ChatClient& get() { return wrapper_ ? *wrapper_ : *base_; }

private:
    std::unique_ptr<ChatClient> base_;
    std::unique_ptr<ChatClient> wrapper_;
};

class Datasets {
public:
    explicit Datasets(const std::string& manifest_path) : manifest_(Manifest::load(manifest_path)) {}

    const LoadedDataset& get(const std::string& name) {
        if (auto it = loaded_.find(name); it != loaded_.end()) return it->second;
        for (const auto& src : manifest_.datasets)
            if (src.name == name) return loaded_.emplace(name, LoadedDataset::load(src)).first->second;
        fail(ErrorCode::Schema, "dataset '" + name + "' is not in the manifest");
    }

    const Manifest& manifest() const { return manifest_; }

private:
    Manifest manifest_;
    std::map<std::string, LoadedDataset> loaded_;
};

std::vector<WindowSpec> read_specs(const std::string& path) {
    std::vector<WindowSpec> out;
    for (const auto& j : read_jsonl(path)) out.push_back(WindowSpec::from_json(j));
    return out;
}

std::vector<Trajectory> read_trajectories(const std::string& path) {
    std::vector<Trajectory> out;
    for (const auto& j : read_jsonl(path)) out.push_back(Trajectory::from_json(j));
    return out;
}

std::unique_ptr<Scorer> make_scorer(const std::string& spec, const AppConfig& c) {
    if (spec == "naive") return std::make_unique<SeasonalNaiveScorer>(c.season);
    if (spec.rfind("remote:", 0) == 0) {
        RemoteScorerConfig rc;
        rc.endpoint = spec.substr(7);
        rc.max_connections = c.workers;
        return std::make_unique<RemoteScorer>(rc);
    }
    fail(ErrorCode::BadConfig, "--scorer must be 'naive' or 'remote:URL', got '" + spec + "'");
}

// Runs jobs on up to `workers` threads; results land in input order. Jobs not
// started before a stop request stay empty.
template <class R>
std::vector<std::optional<R>> run_ordered(std::size_t n, int workers, const std::function<R(std::size_t)>& job) {
    std::vector<std::optional<R>> out(n);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; !g_stop.load() && (i = next++) < n;) out[i] = job(i);
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < std::min<int>(workers, static_cast<int>(n)); ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    return out;
}

std::string describe(const Error& e) { return std::string(to_string(e.code())) + ": " + e.what(); }

// ---------------------------------------------------------------- tool run

// Accepts the corpus long format (series_id,timestamp,value) or a plain table
// with a value column and an optional timestamp column.
Series read_tool_input(const std::string& path, const std::string& series_id) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path);
    std::string header_line;
    require(static_cast<bool>(std::getline(in, header_line)), ErrorCode::Parse, path + ": empty file");
    const auto header = detail::split_csv_line(header_line);
    if (std::find(header.begin(), header.end(), "series_id") != header.end()) {
        const auto all = read_series_csv(path);
        require(!all.empty(), ErrorCode::Parse, path + ": no rows");
        const auto it = series_id.empty() ? all.begin() : all.find(series_id);
        require(it != all.end(), ErrorCode::Parse, path + ": no series '" + series_id + "'");
        require(series_id.empty() ? all.size() == 1 : true, ErrorCode::Parse,
                path + " holds several series; pick one with --series");
        return Series(it->second.values, it->second.timestamps);
    }
    auto find = [&](const char* name) -> std::optional<std::size_t> {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    };
    const auto c_v = header.size() == 1 ? std::optional<std::size_t>(0) : find("value");
    require(c_v.has_value(), ErrorCode::Parse, path + ": missing column value");
    const auto c_ts = find("timestamp");
    std::vector<double> values;
    std::vector<std::string> stamps;
    std::string line;
    for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
        if (line.empty() || line == "\r") continue;
        const auto f = detail::split_csv_line(line);
        const std::string where = path + ":" + std::to_string(lineno);
        require(f.size() == header.size(), ErrorCode::Parse, where + ": wrong field count");
        values.push_back(detail::parse_value(f[*c_v], where));
        if (c_ts) stamps.push_back(f[*c_ts]);
    }
    require(!values.empty(), ErrorCode::Parse, path + ": no rows");
    if (c_ts) return Series(values, stamps);
    return Series(values);
}

Json parse_param_value(const std::string& v) {
    try {
        return Json::parse(v);
    } catch (const Json::exception&) {
        return v;
    }
}

int cmd_tool_run(const std::string& name, const std::string& input, const std::string& series_id, long long left,
                 long long right, const std::vector<std::string>& params) {
    tools::Toolbox toolbox;
    if (!toolbox.find(name)) {
        std::cerr << "unknown tool '" << name << "'. Available tools:\n";
        for (const auto& n : toolbox.names()) std::cerr << "  " << n << '\n';
        return kExitUsage;
    }
    Json args = {{"left", left}, {"right", right}};
    for (const auto& p : params) {
        const auto eq = p.find('=');
        if (eq == std::string::npos || eq == 0) {
            std::cerr << "--param expects key=value, got '" << p << "'\n";
            return kExitUsage;
        }
        args[p.substr(0, eq)] = parse_param_value(p.substr(eq + 1));
    }
    const Series series = read_tool_input(input, series_id);
    const auto outcome = toolbox.run(series, name, args);
    std::cout << outcome.to_json().dump() << '\n';
    return outcome.ok() ? kExitOk : kExitToolError;
}

int cmd_tool_list() {
    std::cout << tools::Toolbox().schemas().dump(2) << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- windows

int cmd_windows(const Globals& g, const std::string& manifest_path, const std::string& out_path) {
    const AppConfig c = load_config(g);
    Datasets data(manifest_path);
    Output out(out_path);
    std::size_t total = 0;
    for (const auto& src : data.manifest().datasets) {
        std::vector<SeriesLength> lengths = src.series;
        if (lengths.empty()) lengths = data.get(src.name).source.series;
        auto result = generate_windows(src.name, lengths, c.windowing);
        mask_metadata(result.windows, c.mask_fraction, c.mask_seed);
        std::size_t masked = 0;
        for (const auto& w : result.windows) {
            out.line(w.to_json());
            masked += w.metadata_masked;
        }
        total += result.windows.size();
        std::cerr << src.name << ": " << result.windows.size() << " windows (stride " << result.stride << ", "
                  << result.uncapped << " before capping, " << masked << " masked)\n";
        for (const auto& w : result.warnings) std::cerr << src.name << ": warning: " << w << '\n';
    }
    out.close();
    std::cerr << "total: " << total << " windows\n";
    return kExitOk;
}

// ---------------------------------------------------------------- rollout

int cmd_rollout(const Globals& g, const std::string& manifest_path, const std::string& specs_path,
                const std::string& out_path, const std::string& replay, const std::string& record, int group_size,
                bool describe_turns) {
    AppConfig c = load_config(g);
    if (!replay.empty() || !record.empty()) c.workers = 1;
    if (group_size == 0) group_size = c.group_size;
    ClientHandle client(c.agent, replay, record);
    Datasets data(manifest_path);
    const auto specs = read_specs(specs_path);
    tools::Toolbox toolbox;

    std::vector<SampleContext> samples;
    for (const auto& s : specs) samples.push_back(data.get(s.dataset).sample(s));
    const std::size_t n = samples.size() * static_cast<std::size_t>(group_size);

    struct Result {
        std::optional<Trajectory> trajectory;
        std::string error;
    };
    const auto results = run_ordered<Result>(n, c.workers, [&](std::size_t i) {
        const auto& sample = samples[i / static_cast<std::size_t>(group_size)];
        RolloutConfig rc = c.rollout;
        if (rc.seed) *rc.seed += static_cast<long long>(i % static_cast<std::size_t>(group_size));
        try {
            auto t = run_rollout(sample, client.get(), toolbox, rc);
            if (describe_turns) t.descriptions = elicit_turn_descriptions(t, client.get(), rc);
            return Result{std::move(t), {}};
        } catch (const Error& e) {
            return Result{std::nullopt, sample.sample_id + ": " + describe(e)};
        }
    });

    Output out(out_path);
    std::size_t ok = 0, failed = 0, skipped = 0;
    for (const auto& r : results) {
        if (!r) {
            ++skipped;
        } else if (r->trajectory) {
            out.line(r->trajectory->to_json());
            ++ok;
        } else {
            std::cerr << "rollout failed: " << r->error << '\n';
            ++failed;
        }
    }
    out.close();
    std::cerr << "rollouts: " << ok << " ok, " << failed << " failed, " << skipped << " skipped\n";
    return failed || skipped ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------- qc

int cmd_qc(const Globals& g, const std::string& traj_path, const std::string& out_path, const std::string& report_path,
           const std::string& replay, const std::string& record) {
    AppConfig c = load_config(g);
    if (!replay.empty() || !record.empty()) c.workers = 1;
    ClientHandle judge(c.judge, replay, record);
    const auto trajectories = read_trajectories(traj_path);
    const JudgeConfig jc = c.judge_config();

    struct Result {
        std::vector<QcVerdict> verdicts;
        std::string error;
    };
    const auto results = run_ordered<Result>(trajectories.size(), c.workers, [&](std::size_t i) {
        try {
            return Result{run_qc(trajectories[i], judge.get(), jc), {}};
        } catch (const Error& e) {
            return Result{{}, describe(e)};
        }
    });

    Output out(out_path);
    std::optional<Output> report;
    if (!report_path.empty()) report.emplace(report_path);
    std::size_t kept = 0, discarded = 0, failed = 0, skipped = 0;
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        const auto& r = results[i];
        if (!r) {
            ++skipped;
            continue;
        }
        const bool pass = r->error.empty() && qc_passed(r->verdicts);
        if (pass) {
            out.line(trajectories[i].to_json());
            ++kept;
        } else if (!r->error.empty()) {
            std::cerr << "qc failed: " << trajectories[i].sample_id() << ": " << r->error << '\n';
            ++failed;
        } else {
            ++discarded;
        }
        if (report) {
            Json v = Json::array();
            for (const auto& x : r->verdicts) v.push_back(x.to_json());
            Json line = {{"sample_id", trajectories[i].sample_id()}, {"kept", pass}, {"verdicts", v}};
            if (!r->error.empty()) line["error"] = r->error;
            report->line(line);
        }
    }
    out.close();
    if (report) report->close();
    std::cerr << "qc: " << kept << " kept, " << discarded << " discarded, " << failed << " failed, " << skipped
              << " skipped\n";
    return failed || skipped ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------- pipeline

int cmd_pipeline(const Globals& g, const std::string& manifest_path, const std::string& specs_path,
                 const std::string& out_path, const std::string& report_path, const std::string& summary_path,
                 const std::string& replay, const std::string& record) {
    AppConfig c = load_config(g);
    if (!replay.empty() || !record.empty()) c.workers = 1;
    ClientHandle client(c.agent, replay, record);
    std::unique_ptr<ClientHandle> separate_judge;
    if (replay.empty() && record.empty() && c.judge.url != c.agent.url)
        separate_judge = std::make_unique<ClientHandle>(c.judge, "", "");
    ChatClient& judge = separate_judge ? separate_judge->get() : client.get();

    Datasets data(manifest_path);
    std::vector<PipelineSample> samples;
    for (const auto& s : read_specs(specs_path)) samples.push_back({s.dataset, data.get(s.dataset).sample(s)});

    Output out(out_path);
    std::optional<Output> report;
    if (!report_path.empty()) report.emplace(report_path);
    tools::Toolbox toolbox;
    const auto summary = pipeline_run(
        samples, client.get(), judge, toolbox, c.pipeline_config(),
        [&](const SampleOutcome& o) {
            if (o.kept) out.line(o.trajectory->to_json());
            if (report) report->line(o.qc_json());
            for (const auto& e : o.errors) std::cerr << o.sample_id << ": " << e << '\n';
        },
        &g_stop);
    out.close();
    if (report) report->close();
    Output sum(summary_path.empty() ? std::string() : summary_path);
    if (summary_path.empty()) std::cerr << summary.to_json().dump(2) << '\n';
    else sum.line(summary.to_json());
    const auto t = summary.totals();
    return t.failed || summary.interrupted ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------- reward

int cmd_reward(const Globals& g, const std::string& traj_path, const std::string& scorer_spec,
               const std::string& out_path, const std::string& heads) {
    AppConfig c = load_config(g);
    if (!heads.empty()) c.heads = head_selection_from_string(heads);
    auto scorer = make_scorer(scorer_spec, c);
    const auto groups = group_by_sample(read_trajectories(traj_path));
    std::vector<GroupCredit> credits;
    std::size_t problems = 0;
    for (const auto& grp : groups) {
        if (g_stop.load()) {
            ++problems;
            continue;
        }
        credits.push_back(credit_group(grp, *scorer, c.reward_config()));
        const auto& cr = credits.back();
        for (const auto& e : cr.excluded) std::cerr << "excluded: " << e << '\n';
        if (cr.error) std::cerr << "group " << cr.group_id << ": " << *cr.error << '\n';
        problems += cr.excluded.size() + (cr.error ? 1 : 0);
    }
    Output out(out_path);
    const std::size_t n = export_rl_batch(credits, out.os());
    out.close();
    std::cerr << "reward: " << groups.size() << " groups, " << n << " records, " << problems << " problems\n";
    return problems ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------- predict

int cmd_predict(const Globals& g, const std::string& traj_path, const std::string& scorer_spec,
                const std::string& out_path, const std::string& head) {
    const AppConfig c = load_config(g);
    require(head == "short" || head == "long", ErrorCode::BadConfig, "--head must be short or long");
    auto scorer = make_scorer(scorer_spec, c);
    const QuantileLevels& Q = c.quantiles;
    const auto median = static_cast<Eigen::Index>(
        std::min_element(Q.q.begin(), Q.q.end(), [](double a, double b) { return std::abs(a - 0.5) < std::abs(b - 0.5); }) -
        Q.q.begin());
    Output out(out_path);
    std::size_t failed = 0;
    for (const auto& t : read_trajectories(traj_path)) {
        const auto& target = head == "short" ? t.sample.future_short : t.sample.future_long;
        try {
            const auto stats = NormStats::from_history(t.sample.history);
            const auto f = scorer->forecast(normalize(t.sample.history, stats), t.final_text(), {target.size()}, Q);
            require(f.heads.size() == 1, ErrorCode::Shape, "scorer returned the wrong number of heads");
            std::vector<double> med;
            for (Eigen::Index r = 0; r < f.heads[0].values.rows(); ++r) med.push_back(f.heads[0].values(r, median));
            out.line({{"sample_id", t.sample_id()},
                      {"target", numbers_to_json(target)},
                      {"prediction", numbers_to_json(denormalize(med, stats))},
                      {"history", numbers_to_json(t.sample.history)},
                      {"description", t.final_text()},
                      {"future_short", numbers_to_json(t.sample.future_short)},
                      {"future_long", numbers_to_json(t.sample.future_long)}});
        } catch (const Error& e) {
            std::cerr << "predict failed: " << t.sample_id() << ": " << describe(e) << '\n';
            ++failed;
        }
    }
    out.close();
    return failed ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const Globals& g, const std::string& pred_path, bool with_judge, bool macro, const std::string& out_path,
             const std::string& replay, const std::string& record) {
    AppConfig c = load_config(g);
    if (macro) c.averaging = Averaging::Macro;
    const auto lines = read_jsonl(pred_path);
    std::vector<EvalSample> set;
    for (const auto& j : lines) set.push_back(EvalSample::from_json(j));
    EvalReport report = evaluate(set, c.season, c.averaging);
    if (with_judge) {
        if (!replay.empty() || !record.empty()) c.workers = 1;
        std::vector<JudgeItem> items;
        for (const auto& j : lines) {
            require(j.contains("description") && j["description"].is_string(), ErrorCode::Schema,
                    "--judge needs a description in every record");
            const auto target = numbers_from_json(j.at("target"), "target");
            items.push_back({j.value("sample_id", ""), j["description"].get<std::string>(),
                             j.contains("future_short") ? numbers_from_json(j["future_short"], "future_short") : target,
                             j.contains("future_long") ? numbers_from_json(j["future_long"], "future_long") : target});
        }
        ClientHandle judge(c.judge, replay, record);
        report.judge = judge_accuracy(items, judge.get(), c.judge_config(), c.workers);
    }
    Output out(out_path);
    out.line(report.to_json());
    out.close();
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, on_sigint);

    CLI::App app{"Time-series reasoning agent: tools, corpus generation, rewards and evaluation"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--endpoint", g.endpoint, "Chat-completions base URL (overrides the config)");
    app.add_option("--workers", g.workers, "Concurrent samples (overrides the config)")->check(CLI::PositiveNumber);

    std::function<int()> action;

    auto* tool = app.add_subcommand("tool", "Run or list analysis tools");
    tool->require_subcommand(1);
    std::string tool_name, tool_input, tool_series;
    long long left = 0, right = 0;
    std::vector<std::string> params;
    auto* tool_run = tool->add_subcommand("run", "Run one tool on a CSV series and print the observation JSON");
    tool_run->add_option("name", tool_name, "Tool name")->required();
    tool_run->add_option("--input", tool_input, "CSV with a value column, or series_id,timestamp,value")
        ->required()
        ->check(CLI::ExistingFile);
    tool_run->add_option("--series", tool_series, "Series id when the CSV holds several");
    tool_run->add_option("--left", left, "Window start (inclusive)")->required();
    tool_run->add_option("--right", right, "Window end (exclusive)")->required();
    tool_run->add_option("--param", params, "Extra argument as key=value; value parsed as JSON when possible");
    tool_run->callback([&] {
        action = [&] { return cmd_tool_run(tool_name, tool_input, tool_series, left, right, params); };
    });
    auto* tool_list = tool->add_subcommand("list", "Print the tool schemas");
    tool_list->callback([&] { action = [] { return cmd_tool_list(); }; });

    std::string manifest, specs, out, traj, replay, record, report, summary, scorer = "naive", heads, pred, head = "short";
    int group_size = 0;
    bool no_describe = false, judge = false, macro = false;

    auto* windows = app.add_subcommand("windows", "Generate window specs for every dataset in a manifest");
    windows->add_option("--manifest", manifest, "Dataset manifest JSON")->required()->check(CLI::ExistingFile);
    windows->add_option("-o,--output", out, "Output JSONL (default stdout)");
    windows->callback([&] { action = [&] { return cmd_windows(g, manifest, out); }; });

    auto add_cassette = [&](CLI::App* cmd) {
        auto* r = cmd->add_option("--replay", replay, "Serve model replies from a cassette")->check(CLI::ExistingFile);
        cmd->add_option("--record", record, "Record model replies to a cassette")->excludes(r);
    };

    auto* rollout = app.add_subcommand("rollout", "Run the tool-using agent on window specs");
    rollout->add_option("--manifest", manifest, "Dataset manifest JSON")->required()->check(CLI::ExistingFile);
    rollout->add_option("--specs", specs, "Window specs JSONL")->required()->check(CLI::ExistingFile);
    rollout->add_option("-o,--output", out, "Trajectory JSONL (default stdout)");
    rollout->add_option("--group-size", group_size, "Rollouts per spec (default: reward.group_size)")
        ->check(CLI::PositiveNumber);
    rollout->add_flag("--no-describe", no_describe, "Skip eliciting per-turn descriptions");
    add_cassette(rollout);
    rollout->callback([&] {
        action = [&] { return cmd_rollout(g, manifest, specs, out, replay, record, group_size, !no_describe); };
    });

    auto* qc = app.add_subcommand("qc", "Judge trajectories and keep those passing every check");
    qc->add_option("--traj", traj, "Trajectory JSONL")->required()->check(CLI::ExistingFile);
    qc->add_option("-o,--output", out, "Kept trajectories JSONL (default stdout)");
    qc->add_option("--report", report, "Per-sample verdict JSONL");
    add_cassette(qc);
    qc->callback([&] { action = [&] { return cmd_qc(g, traj, out, report, replay, record); }; });

    auto* pipeline = app.add_subcommand("pipeline", "Rollout, judge and retry each window spec");
    pipeline->add_option("--manifest", manifest, "Dataset manifest JSON")->required()->check(CLI::ExistingFile);
    pipeline->add_option("--specs", specs, "Window specs JSONL")->required()->check(CLI::ExistingFile);
    pipeline->add_option("-o,--output", out, "Kept trajectories JSONL (default stdout)");
    pipeline->add_option("--report", report, "Per-sample verdict JSONL");
    pipeline->add_option("--summary", summary, "Summary JSON (default stderr)");
    add_cassette(pipeline);
    pipeline->callback(
        [&] { action = [&] { return cmd_pipeline(g, manifest, specs, out, report, summary, replay, record); }; });

    auto* reward = app.add_subcommand("reward", "Score per-turn descriptions and export RL advantages");
    reward->add_option("--traj", traj, "Trajectory JSONL with descriptions")->required()->check(CLI::ExistingFile);
    reward->add_option("--scorer", scorer, "naive or remote:URL")->capture_default_str();
    reward->add_option("--heads", heads, "short, long or both (overrides the config)");
    reward->add_option("-o,--output", out, "RL batch JSONL (default stdout)");
    reward->callback([&] { action = [&] { return cmd_reward(g, traj, scorer, out, heads); }; });

    auto* predict = app.add_subcommand("predict", "Turn final descriptions into point forecasts for eval");
    predict->add_option("--traj", traj, "Trajectory JSONL")->required()->check(CLI::ExistingFile);
    predict->add_option("--scorer", scorer, "naive or remote:URL")->capture_default_str();
    predict->add_option("--head", head, "short or long")->capture_default_str();
    predict->add_option("-o,--output", out, "Prediction JSONL (default stdout)");
    predict->callback([&] { action = [&] { return cmd_predict(g, traj, scorer, out, head); }; });

    auto* eval = app.add_subcommand("eval", "Compute forecast metrics and optional judge accuracy");
    eval->add_option("--pred", pred, "Prediction JSONL")->required()->check(CLI::ExistingFile);
    eval->add_flag("--judge", judge, "Also ask the accuracy judge about each description");
    eval->add_flag("--macro", macro, "Average per sample instead of over all positions");
    eval->add_option("-o,--output", out, "Report JSON (default stdout)");
    add_cassette(eval);
    eval->callback([&] { action = [&] { return cmd_eval(g, pred, judge, macro, out, replay, record); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }
    try {
        return action();
    } catch (const Error& e) {
        std::cerr << "error: " << describe(e) << '\n';
        return kExitUsage;
    }
}
