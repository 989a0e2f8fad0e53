#include "helpers.hpp"

#include <icedetect/pipeline.hpp>
#include <icedetect/simgen.hpp>

#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

using namespace ice;

namespace {

std::string log_text(const Scenario& sc) {
    std::ostringstream out;
    write_log(sc.events, out);
    return out.str();
}

ScenarioConfig noiseless(std::uint64_t seed) {
    ScenarioConfig cfg;
    cfg.seed = seed;
    cfg.native_icebergs = 30;
    cfg.synthetic_icebergs = 30;
    return cfg;
}

struct TableFiles {
    std::map<std::string, std::ostringstream> files;
    std::ostream& operator()(const std::string& name) { return files[name]; }
    std::string at(const std::string& name) const { return files.at(name).str(); }
};

}  // namespace

TEST(Simgen, SameSeedSameBytes) {
    ScenarioConfig cfg;
    cfg.seed = 77;
    cfg.decoys = 300;
    cfg.simultaneous_delete_rate = 0.2;
    const auto a = generate(cfg), b = generate(cfg);
    EXPECT_EQ(log_text(a), log_text(b));
    EXPECT_EQ(a.truth, b.truth);
    cfg.seed = 78;
    EXPECT_NE(log_text(generate(cfg)), log_text(a));
}

TEST(Simgen, LogIsTimeOrderedAndParses) {
    ScenarioConfig cfg;
    cfg.decoys = 200;
    const auto sc = generate(cfg);
    std::istringstream in(log_text(sc));
    EventStream s(in, "generated");
    std::size_t n = 0;
    while (s.next()) ++n;
    EXPECT_EQ(n, sc.events.size());
    EXPECT_EQ(s.rejected(), 0u);
    EXPECT_EQ(s.ordering_violations(), 0u);
}

TEST(Simgen, ScriptedNativeReproducesWorkedExample) {
    const auto golden = detect(testing_helpers::load("native_example.csv"), {});
    ASSERT_EQ(golden.natives.size(), 1u);
    const auto& want = golden.natives[0];

    ScenarioConfig cfg;
    cfg.native_icebergs = 0;
    cfg.synthetic_icebergs = 0;
    cfg.scripted_natives = {NativeSpec{9, 43, 12}};
    const auto sc = generate(cfg);
    const auto got = detect(sc.events, {});
    ASSERT_EQ(got.natives.size(), 1u);
    const auto& n = got.natives[0];
    EXPECT_EQ(n.total_volume, want.total_volume);
    EXPECT_EQ(n.tranche_volumes, want.tranche_volumes);
    EXPECT_EQ(n.tranche_accumulated, want.tranche_accumulated);
    EXPECT_EQ(n.peak_candidates, want.peak_candidates);
    EXPECT_EQ(n.status, want.status);
    ASSERT_EQ(sc.truth.size(), 1u);
    EXPECT_EQ(sc.truth[0].total, 43u);
}

TEST(Simgen, ConfigValidation) {
    ScenarioConfig cfg;
    cfg.cancel_prob = 1.5;
    EXPECT_THROW(generate(cfg), ConfigError);
    cfg = {};
    cfg.delay_max_ms = 301;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.scripted_natives = {NativeSpec{9, 9, 0}};
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Simgen, NoiselessRecallIsComplete) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const auto sc = generate(noiseless(seed));
        const auto d = detect(sc.events, {});
        const auto s = score_against_truth(d.natives, d.trees, sc.truth);
        EXPECT_EQ(s.native.truth, 30u);
        EXPECT_DOUBLE_EQ(s.native.recall(), 1.0) << seed;
        EXPECT_DOUBLE_EQ(s.native.precision(), 1.0) << seed;
        EXPECT_EQ(s.native.peak_agree, 30u);
        EXPECT_EQ(s.native.total_agree, 30u);
        EXPECT_EQ(s.synthetic.truth, 30u);
        EXPECT_DOUBLE_EQ(s.synthetic.recall(), 1.0) << seed;
        EXPECT_DOUBLE_EQ(s.synthetic.precision(), 1.0) << seed;
        EXPECT_EQ(s.synthetic.peak_agree, 30u);
    }
}

TEST(Simgen, TruthChainsSurviveDecoysAndTwins) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto cfg = noiseless(seed);
        cfg.decoys = 1500;
        cfg.simultaneous_delete_rate = 0.3;
        cfg.horizon_ms = 900'000;
        const auto sc = generate(cfg);
        const auto d = detect(sc.events, {});
        for (const auto& t : sc.truth) {
            if (t.kind != IcebergKind::Synthetic) continue;
            bool found = false;
            for (const auto& tree : d.trees) found = found || chain_present(tree, t.tranche_order_ids);
            EXPECT_TRUE(found) << t.id << " seed " << seed;
        }
    }
}

TEST(Simgen, DecoyOnlyDetectionsAreFalsePositives) {
    ScenarioConfig cfg;
    cfg.native_icebergs = 0;
    cfg.synthetic_icebergs = 0;
    cfg.decoys = 5000;
    cfg.horizon_ms = 120'000;
    cfg.levels = 3;
    const auto sc = generate(cfg);
    EXPECT_TRUE(sc.truth.empty());
    const auto d = detect(sc.events, {});
    const auto s = score_against_truth(d.natives, d.trees, sc.truth);
    EXPECT_EQ(s.synthetic.detected, d.trees.size());
    EXPECT_EQ(s.synthetic.matched_detected, 0u);
    EXPECT_EQ(s.native.detected, d.natives.size());
    EXPECT_TRUE(d.natives.empty());
}

TEST(Scoring, HandCases) {
    std::vector<TruthRecord> truth{{"N1", IcebergKind::Native, 9, 43, IcebergStatus::Complete, {5}},
                                   {"N2", IcebergKind::Native, 4, 20, IcebergStatus::Complete, {6}}};
    NativeIceberg hit;
    hit.order_id = 5;
    hit.peak_candidates = {9};
    hit.total_volume = 40;
    NativeIceberg stray;
    stray.order_id = 99;
    stray.peak_candidates = {3};
    std::vector<NativeIceberg> natives{hit, stray};
    const auto s = score_against_truth(natives, {}, truth);
    EXPECT_EQ(s.native.truth, 2u);
    EXPECT_EQ(s.native.detected, 2u);
    EXPECT_EQ(s.native.matched_truth, 1u);
    EXPECT_EQ(s.native.matched_detected, 1u);
    EXPECT_EQ(s.native.peak_agree, 1u);
    EXPECT_EQ(s.native.total_agree, 0u);
    EXPECT_DOUBLE_EQ(s.native.recall(), 0.5);
    EXPECT_DOUBLE_EQ(s.native.precision(), 0.5);
    EXPECT_DOUBLE_EQ(s.synthetic.recall(), 1.0);
}

TEST(Scoring, TruthCsv) {
    std::vector<TruthRecord> truth{{"S1", IcebergKind::Synthetic, 2, 6, IcebergStatus::Cancelled, {7, 8, 9}}};
    std::ostringstream out;
    write_truth(truth, out);
    EXPECT_EQ(out.str(), "iceberg_id,kind,peak,total,status,tranche_order_ids\nS1,synthetic,2,6,cancelled,7;8;9\n");
}

TEST(Pipeline, JsonLinesRoundTrip) {
    auto cfg = noiseless(3);
    cfg.decoys = 400;
    const auto d = detect(generate(cfg).events, {});
    ASSERT_FALSE(d.natives.empty());
    ASSERT_FALSE(d.trees.empty());
    std::stringstream io;
    for (const auto& n : d.natives) io << to_json(n).dump() << '\n';
    io << '\n';
    for (const auto& t : d.trees) io << to_json(t).dump() << '\n';
    std::vector<NativeIceberg> natives;
    std::vector<TrancheTree> trees;
    read_detections(io, natives, trees);
    ASSERT_EQ(natives.size(), d.natives.size());
    ASSERT_EQ(trees.size(), d.trees.size());
    for (std::size_t i = 0; i < natives.size(); ++i) EXPECT_EQ(to_json(natives[i]), to_json(d.natives[i]));
    for (std::size_t i = 0; i < trees.size(); ++i) {
        EXPECT_EQ(to_json(trees[i]), to_json(d.trees[i]));
        EXPECT_EQ(trees[i].chains.size(), d.trees[i].chains.size());
    }
}

TEST(Pipeline, MalformedDetectionLine) {
    std::istringstream in("{\"kind\": \"native\"}\n");
    std::vector<NativeIceberg> natives;
    std::vector<TrancheTree> trees;
    EXPECT_THROW(read_detections(in, natives, trees), DetectionFormatError);
    std::istringstream other("{\"kind\": \"weird\"}\n");
    EXPECT_THROW(read_detections(other, natives, trees), DetectionFormatError);
}

TEST(Pipeline, StreamingSinkSeesEveryDetection) {
    auto cfg = noiseless(5);
    cfg.decoys = 300;
    const auto sc = generate(cfg);
    std::size_t natives = 0, trees = 0;
    std::size_t i = 0;
    const auto d = detect_events(
        [&]() -> std::optional<OrderEvent> {
            if (i == sc.events.size()) return std::nullopt;
            return sc.events[i++];
        },
        DetectorConfig{}, DetectionSink{[&](const NativeIceberg&) { ++natives; }, [&](const TrancheTree&) { ++trees; }},
        false);
    EXPECT_TRUE(d.natives.empty());
    EXPECT_TRUE(d.trees.empty());
    const auto kept = detect(sc.events, {});
    EXPECT_EQ(natives, kept.natives.size());
    EXPECT_EQ(trees, kept.trees.size());
    EXPECT_EQ(d.events, sc.events.size());
}

TEST(Stats, NativeExampleTables) {
    const auto d = detect(testing_helpers::load("native_example.csv"), {});
    TableFiles files;
    write_tables(tabulate(d), files);
    EXPECT_EQ(files.at("actions.csv"), "action,count\nLIMIT,1\nMODIFY,8\nDELETE,1\nTRADE,11\n");
    EXPECT_EQ(files.at("completion.csv"),
              "kind,status,count\nnative,complete,1\nnative,cancelled,0\nsynthetic,complete,0\nsynthetic,cancelled,0\n");
    EXPECT_EQ(files.at("peaks.csv"), "kind,peak,count\nnative,9,1\n");
    EXPECT_EQ(files.at("tranches.csv"), "kind,n_tranches,count\nnative,4,1\n");
}

TEST(Stats, SyntheticExampleGaps) {
    const auto d = detect(testing_helpers::load("synthetic_example.csv"), {});
    const auto t = tabulate(d);
    // One refill delay per edge.
    EXPECT_EQ(t.synthetic_gaps.total, 8u);
    EXPECT_EQ(t.synthetic_peaks.at(2), 1u);
    EXPECT_EQ(t.synthetic_tranches.at(5), 1u);
    for (const auto& [b, c] : t.synthetic_gaps.bins) {
        EXPECT_GE(b, 0);
        EXPECT_LE(b, 300);
    }
}

TEST(Stats, EmptyLog) {
    const auto d = detect(std::span<const OrderEvent>{}, {});
    TableFiles files;
    write_tables(tabulate(d), files);
    EXPECT_EQ(files.at("zero_gaps.csv"), "kind,gaps,zero_gaps,zero_pct\nnative,0,0,0.00\nsynthetic,0,0,0.00\n");
    EXPECT_EQ(files.at("arrival_gaps.csv"), "kind,gap_from_s,gap_to_s,count\n");
    EXPECT_EQ(files.files.size(), 8u);
}

TEST(Histogram, BinsByLowerEdge) {
    Histogram h{10, {}, 0, 0};
    for (std::int64_t x : {0, 0, 9, 10, 25}) h.add(x);
    EXPECT_EQ(h.bins.at(0), 3u);
    EXPECT_EQ(h.bins.at(10), 1u);
    EXPECT_EQ(h.bins.at(20), 1u);
    EXPECT_DOUBLE_EQ(h.zero_share(), 0.4);
}

TEST(Training, NativeSupportMatchesTruthTotals) {
    auto cfg = noiseless(9);
    cfg.synthetic_icebergs = 0;
    cfg.native_icebergs = 80;
    cfg.peak_min = 4;
    cfg.peak_max = 6;
    const auto sc = generate(cfg);
    const auto d = detect(sc.events, {});
    const auto m = train_model(d.natives, d.trees, {});
    std::map<Volume, std::set<Volume>> want;
    for (const auto& t : sc.truth) want[t.peak].insert(t.total);
    ASSERT_EQ(m.native.size(), want.size());
    for (const auto& [p, totals] : want) {
        const auto& sup = m.native.at(p).support;
        EXPECT_EQ(std::set<Volume>(sup.begin(), sup.end()), totals) << "peak " << p;
    }
    EXPECT_TRUE(m.synthetic.empty());

    ModelConfig complete_only;
    complete_only.include_censored = false;
    const auto m2 = train_model(d.natives, d.trees, complete_only);
    for (const auto& [p, dist] : m2.native) EXPECT_FALSE(dist.degenerate);
}
