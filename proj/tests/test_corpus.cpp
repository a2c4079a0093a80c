#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "oracles/naive_windows.hpp"
#include "tsagent/corpus.hpp"

using namespace tsagent;

namespace {

WindowingResult one(std::size_t n, WindowBudgetConfig c = {}) { return generate_windows("ds", {{"a", n}}, c); }

ChatMessage answer(const std::string& text) { return {Role::Assistant, text, {}, {}}; }

Json verdict(bool pass, const std::string& evidence = "ok") {
    return completion_body(answer(Json{{"pass", pass}, {"evidence", evidence}}.dump()));
}

Trajectory small_trajectory(const std::string& final_text) {
    Trajectory t;
    t.sample.sample_id = "ds:a:0";
    t.sample.metadata.dataset = "SHMetro";
    t.sample.metadata.unit = "passengers";
    t.sample.future_short = {1, 2};
    t.sample.future_long = {1, 2, 3, 4};
    t.messages = {ChatMessage::system("sys"), ChatMessage::user("usr"), answer(final_text)};
    t.turns = {{2, 3, {}, {}}};
    return t;
}

SampleContext sample_ctx(const std::string& id) {
    SampleContext s;
    s.sample_id = id;
    s.values = {1, 2, 3, 4, 5, 6, 7, 8};
    s.history = {0, 6};
    s.horizon_short = 1;
    s.horizon_long = 2;
    return s;
}

std::string temp_dir() {
    auto d = std::filesystem::temp_directory_path() / "tsagent_corpus_test";
    std::filesystem::create_directories(d);
    return d.string();
}

}  // namespace

TEST(Windows, SkipMaxLengthAndSliding) {
    EXPECT_TRUE(one(800).windows.empty());
    EXPECT_TRUE(one(815).windows.empty());

    const auto at816 = one(816).windows;
    ASSERT_EQ(at816.size(), 1u);
    EXPECT_EQ(at816[0].hist_len, 96u);

    const auto w = one(2000).windows;
    ASSERT_EQ(w.size(), 1u);
    EXPECT_EQ(w[0].kind, WindowKind::MaxLength);
    EXPECT_EQ(w[0].hist_start, 0u);
    EXPECT_EQ(w[0].hist_len, 1280u);
    EXPECT_EQ(w[0].long_start, 1280u);
    EXPECT_EQ(w[0].end(), 2000u);
    EXPECT_EQ(w[0].short_start, w[0].long_start);
    EXPECT_EQ(w[0].short_len, 96u);

    WindowBudgetConfig no_floor;
    no_floor.B_min = 0;
    const auto s = one(3792, no_floor);
    ASSERT_EQ(s.windows.size(), 3u);
    EXPECT_EQ(s.windows[2].hist_start, 1024u);
    EXPECT_EQ(s.windows[2].end(), 3792u);
    EXPECT_EQ(one(2768, no_floor).windows.size(), 1u);
    EXPECT_EQ(one(2767, no_floor).windows[0].kind, WindowKind::MaxLength);
}

TEST(Windows, FallbackStridesEscalate) {
    const auto r = one(3792);  // 3 windows at 512 is below B_min = 500
    EXPECT_EQ(r.stride, 64u);
    EXPECT_EQ(r.windows.size(), (3792u - 2768u) / 64u + 1u);
    EXPECT_FALSE(r.warnings.empty());

    WindowBudgetConfig c;
    c.B_min = 5;
    const auto mid = one(3792, c);
    EXPECT_EQ(mid.stride, 256u);
    EXPECT_EQ(mid.windows.size(), 5u);
    EXPECT_TRUE(mid.warnings.empty());
}

TEST(Windows, SqrtBudgets) {
    EXPECT_EQ(allocate_budgets({100, 400}, 30), (std::vector<std::size_t>{10, 20}));
    EXPECT_EQ(allocate_budgets({100, 400}, 600), (std::vector<std::size_t>{100, 400}));
    EXPECT_EQ(allocate_budgets({1, 10000}, 50), (std::vector<std::size_t>{0, 50}));
    EXPECT_EQ(allocate_budgets({4, 10000}, 60), (std::vector<std::size_t>{1, 59}));
    EXPECT_EQ(allocate_budgets({0, 9, 9}, 4), (std::vector<std::size_t>{0, 2, 2}));

    std::mt19937_64 rng(5);
    for (int t = 0; t < 500; ++t) {
        std::vector<std::size_t> s(1 + rng() % 30);
        for (auto& x : s) x = rng() % 300;
        const std::size_t total = std::accumulate(s.begin(), s.end(), std::size_t{0});
        const std::size_t B = 1 + rng() % 600;
        const auto b = allocate_budgets(s, B);
        EXPECT_EQ(std::accumulate(b.begin(), b.end(), std::size_t{0}), std::min(B, total));
        for (std::size_t i = 0; i < s.size(); ++i) {
            EXPECT_LE(b[i], s[i]);
            for (std::size_t j = 0; j < s.size(); ++j)
                if (s[i] < s[j]) {
                    EXPECT_LE(b[i], b[j]);
                }
        }
    }
}

TEST(Windows, CapSubsamplesEvenly) {
    WindowBudgetConfig c;
    c.B_max = 4;
    c.B_min = 0;
    const auto r = generate_windows("ds", {{"a", 2768 + 512 * 9}}, c);  // 10 candidates
    EXPECT_TRUE(r.capped);
    EXPECT_EQ(r.uncapped, 10u);
    ASSERT_EQ(r.windows.size(), 4u);
    std::vector<std::size_t> starts;
    for (const auto& w : r.windows) starts.push_back(w.hist_start / 512);
    EXPECT_EQ(starts, (std::vector<std::size_t>{0, 2, 5, 7}));
}

TEST(Windows, MatchesBruteForceEnumerator) {
    std::mt19937_64 rng(11);
    int capped = 0, fallback = 0, max_len = 0, skipped = 0;
    for (int t = 0; t < 200; ++t) {
        const auto m = oracle::random_manifest(rng);
        const auto got = generate_windows("ds", m.series, m.config);
        const auto want = oracle::windows("ds", m.series, m.config);
        ASSERT_EQ(got.windows, want) << "case " << t;
        capped += got.capped;
        fallback += got.stride != m.config.d;
        for (const auto& s : m.series) {
            max_len += s.length >= m.config.H_s + m.config.H_l && s.length < m.config.L + m.config.H_l;
            skipped += s.length < m.config.H_s + m.config.H_l;
        }
        for (const auto& w : got.windows) {
            const auto it = std::find_if(m.series.begin(), m.series.end(), [&](const auto& s) { return s.id == w.series_id; });
            EXPECT_LE(w.end(), it->length);
            EXPECT_LE(w.hist_len, m.config.L);
        }
        if (got.capped) {
            EXPECT_EQ(got.windows.size(), m.config.B_max);
        }
    }
    EXPECT_GT(capped, 10);
    EXPECT_GT(fallback, 10);
    EXPECT_GT(max_len, 50);
    EXPECT_GT(skipped, 50);
}

TEST(Windows, RejectsBadConfig) {
    WindowBudgetConfig c;
    c.fallback_strides = {256, 300};
    EXPECT_THROW(one(5000, c), Error);
    c = {};
    c.H_s = 800;
    EXPECT_THROW(one(5000, c), Error);
}

TEST(Windows, SpecJsonRoundTrip) {
    const auto w = one(2000).windows[0];
    EXPECT_EQ(WindowSpec::from_json(w.to_json()), w);
    EXPECT_EQ(w.to_json()["kind"], "max_length");
}

TEST(Masking, FractionsAndDeterminism) {
    std::vector<WindowSpec> ws;
    for (int i = 0; i < 10; ++i) ws.push_back({"ds", "s" + std::to_string(i), 0, 5, 5, 1, 5, 2, WindowKind::Sliding, false});
    auto count = [](const std::vector<WindowSpec>& v) {
        return std::count_if(v.begin(), v.end(), [](const WindowSpec& w) { return w.metadata_masked; });
    };
    auto a = ws;
    mask_metadata(a, 0.0, 1);
    EXPECT_EQ(count(a), 0);
    mask_metadata(a, 1.0, 1);
    EXPECT_EQ(count(a), 10);

    auto b = ws;
    mask_metadata(b, 0.3, 42);
    EXPECT_EQ(count(b), 3);
    auto again = b;
    mask_metadata(again, 0.3, 42);
    EXPECT_EQ(again, b);

    auto reversed = ws;
    std::reverse(reversed.begin(), reversed.end());
    mask_metadata(reversed, 0.3, 42);
    std::reverse(reversed.begin(), reversed.end());
    EXPECT_EQ(reversed, b);

    auto other = ws;
    for (int seed = 0; seed < 20 && other == b; ++seed) {
        other = ws;
        mask_metadata(other, 0.3, 1000 + seed);
    }
    EXPECT_NE(other, b);
    EXPECT_THROW(mask_metadata(other, 1.5, 1), Error);
}

TEST(Masking, PerDataset) {
    std::vector<WindowSpec> ws;
    for (int i = 0; i < 10; ++i) ws.push_back({"a", std::to_string(i), 0, 5, 5, 1, 5, 2, WindowKind::Sliding, false});
    for (int i = 0; i < 4; ++i) ws.push_back({"b", std::to_string(i), 0, 5, 5, 1, 5, 2, WindowKind::Sliding, false});
    mask_metadata(ws, 0.3, 7);
    int a = 0, b = 0;
    for (const auto& w : ws) (w.dataset == "a" ? a : b) += w.metadata_masked;
    EXPECT_EQ(a, 3);
    EXPECT_EQ(b, 1);
}

TEST(Datasets, CsvAndSidecar) {
    const auto dir = temp_dir();
    {
        std::ofstream csv(dir + "/d.csv");
        csv << "series_id,timestamp,value\n";
        for (int i = 0; i < 12; ++i) csv << "x,\"2020-01-" << (i + 10) << " 00:00\"," << (i == 3 ? "" : std::to_string(i)) << "\n";
        csv << "y,t0,1.5\n";
        std::ofstream meta(dir + "/d.jsonl");
        meta << R"({"dataset":"Demo","domain":"Energy"})" << "\n" << R"({"series_id":"x","unit":"MW"})" << "\n";
        std::ofstream man(dir + "/m.json");
        man << R"({"datasets":[{"name":"demo","csv":"d.csv","metadata":"d.jsonl"}]})";
    }
    const auto m = Manifest::load(dir + "/m.json");
    ASSERT_EQ(m.datasets.size(), 1u);
    const auto d = LoadedDataset::load(m.datasets[0]);
    ASSERT_EQ(d.source.series.size(), 2u);
    EXPECT_EQ(d.source.series[0].length, 12u);
    EXPECT_TRUE(std::isnan(d.series.at("x").values[3]));
    EXPECT_EQ(d.metadata_for("x").unit, "MW");
    EXPECT_EQ(d.metadata_for("x").domain, "Energy");
    EXPECT_EQ(d.metadata_for("y").unit, "unavailable");

    const WindowSpec w{"demo", "x", 2, 6, 8, 2, 8, 4, WindowKind::Sliding, false};
    const auto s = d.sample(w);
    EXPECT_EQ(s.history_values().size(), 6u);
    EXPECT_EQ(s.times.ht0, "2020-01-12 00:00");
    EXPECT_EQ(s.times.ft1_l, "2020-01-21 00:00");
    EXPECT_EQ(s.metadata.dataset, "Demo");
    auto masked = w;
    masked.metadata_masked = true;
    EXPECT_EQ(d.sample(masked).metadata.unit, "unavailable");
    EXPECT_EQ(d.sample(masked).times.ht0, "unavailable");
    std::filesystem::remove_all(dir);
}

TEST(Qc, VerdictParsing) {
    EXPECT_TRUE(parse_verdict(QcCheck::MetadataLeak, R"({"pass": true, "evidence": "ok"})", 1).pass);
    const auto bad = parse_verdict(QcCheck::MetadataLeak, "looks fine", 1);
    EXPECT_FALSE(bad.pass);
    EXPECT_TRUE(bad.malformed);
    EXPECT_EQ(bad.evidence, "malformed");
    EXPECT_TRUE(parse_verdict(QcCheck::MetadataLeak, R"({"pass": "yes", "evidence": "ok"})", 1).malformed);
    EXPECT_TRUE(parse_verdict(QcCheck::MetadataLeak, R"({"pass": true})", 1).malformed);
    std::string sixty, sixty_one;
    for (int i = 0; i < 60; ++i) sixty += "w ";
    sixty_one = sixty + "w";
    EXPECT_FALSE(parse_verdict(QcCheck::MetadataLeak, Json{{"pass", true}, {"evidence", sixty}}.dump(), 1).malformed);
    EXPECT_TRUE(parse_verdict(QcCheck::MetadataLeak, Json{{"pass", true}, {"evidence", sixty_one}}.dump(), 1).malformed);
}

TEST(Qc, AllPassRunsThreeChecks) {
    std::vector<std::string> prompts;
    FunctionClient judge([&](const CompletionRequest& r) {
        prompts.push_back(r.messages.at(0).text());
        return verdict(true);
    });
    const auto v = run_qc(small_trajectory("In the short term, peaks near 2016-08-23."), judge, {});
    ASSERT_EQ(v.size(), 3u);
    EXPECT_TRUE(qc_passed(v));
    EXPECT_EQ(v[0].check, QcCheck::MetadataLeak);
    EXPECT_EQ(v[2].check, QcCheck::ForecastAccuracy);
    EXPECT_NE(prompts[0].find("Forecast text: In the short term, peaks near 2016-08-23.\n"), std::string::npos);
    EXPECT_NE(prompts[0].find("Dataset: SHMetro"), std::string::npos);
    EXPECT_NE(prompts[0].find(R"({"pass": true/false, "evidence": "<=60 words"})"), std::string::npos);
    EXPECT_NE(prompts[1].find("Serialized conversation: [system] sys\n[user] usr\n[assistant]"), std::string::npos);
    EXPECT_NE(prompts[2].find("Short-term future values: 1, 2\nLong-term future values: 1, 2, 3, 4"), std::string::npos);
}

TEST(Qc, FirstFailureShortCircuits) {
    int calls = 0;
    FunctionClient judge([&](const CompletionRequest&) {
        ++calls;
        return calls == 2 ? completion_body(answer("not json")) : verdict(true);
    });
    const auto v = run_qc(small_trajectory("x"), judge, {}, 2);
    ASSERT_EQ(v.size(), 2u);
    EXPECT_TRUE(v[1].malformed);
    EXPECT_EQ(v[1].attempt, 2);
    EXPECT_EQ(calls, 2);
    EXPECT_FALSE(qc_passed(v));
}

TEST(Qc, MaskedContextHidesMetadata) {
    auto t = small_trajectory("x");
    t.sample.metadata_masked = true;
    EXPECT_EQ(metadata_context(t.sample), "Metadata availability: unavailable");
}

namespace {

// The agent answers with the attempt number; the judge fails the first
// `fails[sample]` attempts of each sample at the accuracy check.
struct ScriptedPipeline {
    std::map<std::string, int> fails;
    std::map<std::string, int> attempts;
    std::mutex mu;

    FunctionClient agent() {
        return FunctionClient([this](const CompletionRequest& r) {
            std::lock_guard lock(mu);
            const auto& user = r.messages.at(1).text();
            const std::string id = user.substr(user.rfind('\n') + 1);
            const int n = ++attempts[id];
            return completion_body(answer("sample " + id + " attempt " + std::to_string(n)));
        });
    }

    FunctionClient judge() {
        return FunctionClient([this](const CompletionRequest& r) {
            const auto& p = r.messages.at(0).text();
            if (p.find("forecast accuracy") == std::string::npos) return verdict(true);
            const auto at = p.find("sample ");
            std::istringstream in(p.substr(at + 7));
            std::string id, word;
            int n = 0;
            in >> id >> word >> n;
            std::lock_guard lock(mu);
            return verdict(n > fails[id], "attempt " + std::to_string(n));
        });
    }
};

std::vector<PipelineSample> pipeline_samples(int n) {
    std::vector<PipelineSample> out;
    for (int i = 0; i < n; ++i) {
        auto s = sample_ctx(std::to_string(i));
        s.values = {static_cast<double>(i)};
        s.values.push_back(0);
        s.history = {0, 1};
        s.horizon_short = s.horizon_long = 1;
        out.push_back({i % 2 ? "odd" : "even", s});
    }
    return out;
}

}  // namespace

TEST(Pipeline, RetriesThenKeepsOrDiscards) {
    ScriptedPipeline sp;
    sp.fails = {{"0", 0}, {"1", 1}, {"2", 4}, {"3", 3}};
    auto agent = sp.agent();
    auto judge = sp.judge();
    const tools::Toolbox box;
    std::vector<SampleOutcome> seen;
    const auto report = pipeline_run(pipeline_samples(4), agent, judge, box, {}, [&](const SampleOutcome& o) { seen.push_back(o); });
    ASSERT_EQ(seen.size(), 4u);
    EXPECT_TRUE(seen[0].kept);
    EXPECT_EQ(seen[0].retries(), 0);
    EXPECT_TRUE(seen[1].kept);
    EXPECT_EQ(seen[1].retries(), 1);
    EXPECT_EQ(seen[1].verdicts.size(), 6u);
    EXPECT_FALSE(seen[2].kept);
    EXPECT_EQ(seen[2].attempts, 4);
    EXPECT_EQ(seen[2].retries(), 3);
    EXPECT_EQ(seen[2].qc_json()["retries"], 3);
    EXPECT_TRUE(seen[3].kept);
    EXPECT_EQ(seen[3].retries(), 3);
    EXPECT_EQ(sp.attempts["2"], 4);

    const auto t = report.totals();
    EXPECT_EQ(t.windows, 4u);
    EXPECT_EQ(t.kept + t.discarded, t.windows);
    EXPECT_EQ(t.discarded, 1u);
    EXPECT_EQ(t.generated, 1u + 2u + 4u + 4u);
    EXPECT_EQ(t.retries, 0u + 1u + 3u + 3u);
    EXPECT_EQ(report.datasets.at("even").kept, 1u);
    EXPECT_EQ(report.datasets.at("even").discarded, 1u);
    EXPECT_FALSE(report.interrupted);
}

TEST(Pipeline, WorkerPoolKeepsInputOrder) {
    for (int workers : {1, 4}) {
        ScriptedPipeline sp;
        for (int i = 0; i < 30; ++i) sp.fails[std::to_string(i)] = i % 5;
        auto agent = sp.agent();
        auto judge = sp.judge();
        const tools::Toolbox box;
        PipelineConfig c;
        c.workers = workers;
        std::vector<std::string> order;
        std::size_t kept = 0;
        const auto report = pipeline_run(pipeline_samples(30), agent, judge, box, c, [&](const SampleOutcome& o) {
            order.push_back(o.sample_id);
            kept += o.kept;
        });
        for (int i = 0; i < 30; ++i) EXPECT_EQ(order[i], std::to_string(i));
        EXPECT_EQ(kept, 24u);
        EXPECT_EQ(report.totals().kept, 24u);
    }
}

TEST(Pipeline, RolloutErrorsAreRetriedAndCounted) {
    int calls = 0;
    FunctionClient agent([&](const CompletionRequest&) -> Json {
        ++calls;
        fail(ErrorCode::Transport, "down");
    });
    FunctionClient judge([](const CompletionRequest&) { return verdict(true); });
    const tools::Toolbox box;
    std::vector<SampleOutcome> seen;
    const auto report = pipeline_run(pipeline_samples(1), agent, judge, box, {}, [&](const SampleOutcome& o) { seen.push_back(o); });
    EXPECT_EQ(calls, 4);
    ASSERT_EQ(seen.size(), 1u);
    EXPECT_TRUE(seen[0].failed);
    EXPECT_EQ(seen[0].errors.size(), 4u);
    EXPECT_EQ(report.totals().failed, 1u);
}

TEST(Pipeline, StopFlagSkipsRemaining) {
    ScriptedPipeline sp;
    auto agent = sp.agent();
    auto judge = sp.judge();
    const tools::Toolbox box;
    std::atomic<bool> stop{false};
    std::size_t emitted = 0;
    const auto report = pipeline_run(pipeline_samples(10), agent, judge, box, {}, [&](const SampleOutcome&) {
        if (++emitted == 3) stop = true;
    }, &stop);
    EXPECT_TRUE(report.interrupted);
    EXPECT_LT(emitted, 10u);
    EXPECT_EQ(report.totals().skipped + report.totals().kept + report.totals().discarded, 10u);
}
