#include "helpers.hpp"

#include <icedetect/pipeline.hpp>
#include <icedetect/simgen.hpp>
#include <icedetect/synthetic_detect.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

using namespace ice;
using testing_helpers::ev;

namespace {

std::vector<TrancheTree> replay(const std::vector<OrderEvent>& evs, DetectorConfig cfg = {}) {
    SyntheticDetector d(cfg);
    std::vector<TrancheTree> out;
    for (const auto& e : evs) d.process(e, out);
    for (auto& t : d.finish()) out.push_back(std::move(t));
    return out;
}

std::multiset<std::size_t> lengths(const TrancheTree& t) {
    std::multiset<std::size_t> s;
    for (const auto& c : t.chains) s.insert(c.length);
    return s;
}

std::vector<OrderId> chain_ids(const TrancheTree& t, const Chain& c) {
    std::vector<OrderId> ids;
    for (auto n : c.nodes) ids.push_back(t.nodes[n].order_id);
    return ids;
}

/// One fully traded tranche: Limit at t, Trade and Delete at t + life.
void tranche(std::vector<OrderEvent>& evs, std::int64_t t, std::int64_t life, OrderId id, Volume v,
             OrderId aggressor) {
    evs.push_back(ev(t, id, Action::Limit, v));
    evs.push_back(ev(t + life, aggressor, Action::Trade, v, id, Side::Buy));
    evs.push_back(ev(t + life, id, Action::Delete, v));
}

}  // namespace

TEST(SyntheticDetector, WorkedExampleReplay) {
    auto trees = replay(testing_helpers::load("synthetic_example.csv"));
    ASSERT_EQ(trees.size(), 1u);
    const auto& t = trees[0];
    EXPECT_EQ(t.nodes.size(), 9u);
    EXPECT_EQ(t.peak, 2u);
    EXPECT_EQ(t.status, IcebergStatus::Complete);
    EXPECT_EQ(lengths(t), (std::multiset<std::size_t>{3, 4, 4, 5}));
    ASSERT_EQ(t.chains.size(), 4u);
    // One chain per root, ordered by root placement then id.
    EXPECT_EQ(chain_ids(t, t.chains[0]), (std::vector<OrderId>{1, 2, 3, 8, 9}));
    EXPECT_EQ(chain_ids(t, t.chains[1]), (std::vector<OrderId>{4, 6, 8, 9}));
    EXPECT_EQ(chain_ids(t, t.chains[2]), (std::vector<OrderId>{5, 6, 8, 9}));
    EXPECT_EQ(chain_ids(t, t.chains[3]), (std::vector<OrderId>{7, 8, 9}));
    std::vector<Volume> vols;
    for (const auto& c : t.chains) vols.push_back(c.volume);
    EXPECT_EQ(vols, (std::vector<Volume>{10, 8, 8, 6}));
    EXPECT_DOUBLE_EQ(aggregate_volume(t, Aggregation::All), 8.0);
    EXPECT_DOUBLE_EQ(aggregate_volume(t, Aggregation::Unique), 8.0);
    EXPECT_DOUBLE_EQ(aggregate_volume(t, Aggregation::Longest), 10.0);
}

TEST(SyntheticDetector, WorkedExampleEdges) {
    auto trees = replay(testing_helpers::load("synthetic_example.csv"));
    ASSERT_EQ(trees.size(), 1u);
    std::ostringstream out;
    write_edges_csv(trees, out);
    EXPECT_EQ(out.str(),
              "tree_id,parent_order_id,child_order_id,gap_ms\n"
              "1,1,2,20\n1,2,3,990\n1,3,8,2000\n1,4,6,970\n1,5,6,970\n1,6,8,2000\n1,7,8,1010\n1,8,9,1000\n");
}

TEST(SyntheticDetector, NoRefillGivesSuppressedSingleTranche) {
    std::vector<OrderEvent> evs;
    tranche(evs, 0, 10, 1, 4, 100);
    SyntheticDetector d;
    std::vector<TrancheTree> out;
    for (const auto& e : evs) d.process(e, out);
    for (auto& t : d.finish()) out.push_back(std::move(t));
    EXPECT_TRUE(out.empty());
    EXPECT_EQ(d.counters().trees_suppressed, 1u);

    DetectorConfig one;
    one.min_tranches = 2;
    one.validate();
    EXPECT_TRUE(replay(evs, one).empty());
}

TEST(SyntheticDetector, LinearChain) {
    std::vector<OrderEvent> evs;
    tranche(evs, 0, 100, 1, 7, 100);
    tranche(evs, 150, 100, 2, 7, 101);
    tranche(evs, 300, 100, 3, 7, 102);
    auto trees = replay(evs);
    ASSERT_EQ(trees.size(), 1u);
    ASSERT_EQ(trees[0].chains.size(), 1u);
    EXPECT_EQ(trees[0].chains[0].length, 3u);
    EXPECT_EQ(trees[0].chains[0].volume, 21u);
}

TEST(SyntheticDetector, WindowBoundaryIsInclusive) {
    for (std::int64_t gap : {0, 1, 299, 300, 301}) {
        std::vector<OrderEvent> evs;
        tranche(evs, 0, 10, 1, 3, 100);
        tranche(evs, 10 + gap, 10, 2, 3, 101);
        tranche(evs, 20 + gap + gap, 10, 3, 3, 102);
        const auto trees = replay(evs);
        EXPECT_EQ(trees.size(), gap <= 300 ? 1u : 0u) << gap;
    }
}

TEST(SyntheticDetector, OnlyFirstRefillAttaches) {
    std::vector<OrderEvent> evs;
    tranche(evs, 0, 10, 1, 3, 100);
    evs.push_back(ev(50, 2, Action::Limit, 3));
    evs.push_back(ev(60, 3, Action::Limit, 3));
    SyntheticDetector d;
    std::vector<TrancheTree> out;
    for (const auto& e : evs) d.process(e, out);
    EXPECT_EQ(d.live_trees(), 2u);  // {1 -> 2} and {3}
}

TEST(SyntheticDetector, PartialFillThenDeleteCancels) {
    std::vector<OrderEvent> evs;
    tranche(evs, 0, 10, 1, 3, 100);
    tranche(evs, 20, 10, 2, 3, 101);
    evs.push_back(ev(40, 3, Action::Limit, 3));
    evs.push_back(ev(50, 103, Action::Trade, 1, 3, Side::Buy));
    evs.push_back(ev(50, 3, Action::Modify, 2));
    evs.push_back(ev(60, 3, Action::Delete, 2));
    auto trees = replay(evs);
    ASSERT_EQ(trees.size(), 1u);
    EXPECT_EQ(trees[0].status, IcebergStatus::Cancelled);
    EXPECT_EQ(trees[0].chains[0].length, 3u);
}

TEST(SyntheticDetector, DifferentKeysNeverLink) {
    std::vector<OrderEvent> evs;
    tranche(evs, 0, 10, 1, 3, 100);
    tranche(evs, 20, 10, 2, 4, 101);  // other volume
    evs.push_back(ev(40, 3, Action::Limit, 3, {}, Side::Buy));  // other side
    evs.push_back(ev(40, 4, Action::Limit, 3, {}, Side::Sell, "100.25"));  // other price
    DetectorConfig cfg;
    cfg.min_tranches = 2;
    EXPECT_TRUE(replay(evs, cfg).empty());
}

TEST(SyntheticDetector, ModifyWithRepriceTaintsNode) {
    std::vector<OrderEvent> evs;
    evs.push_back(ev(0, 1, Action::Limit, 3));
    evs.push_back(ev(5, 1, Action::Modify, 3, {}, Side::Sell, "100.25"));
    evs.push_back(ev(10, 100, Action::Trade, 3, 1, Side::Buy));
    evs.push_back(ev(10, 1, Action::Delete, 3));
    tranche(evs, 20, 10, 2, 3, 101);
    tranche(evs, 40, 10, 3, 3, 102);
    EXPECT_TRUE(replay(evs).empty());
}

TEST(SyntheticProperties, GeneratedLogs) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        ScenarioConfig cfg;
        cfg.seed = seed;
        cfg.native_icebergs = 20;
        cfg.synthetic_icebergs = 40;
        cfg.decoys = 800;
        cfg.simultaneous_delete_rate = 0.3;
        cfg.horizon_ms = 600'000;
        auto sc = generate(cfg);
        const DetectorConfig dc;
        const auto trees = replay(sc.events, dc);

        std::size_t prev_reported = std::numeric_limits<std::size_t>::max();
        for (int m = 2; m <= 6; ++m) {
            DetectorConfig c;
            c.min_tranches = m;
            const auto n = replay(sc.events, c).size();
            EXPECT_LE(n, prev_reported) << "min_tranches " << m;
            prev_reported = n;
        }

        for (const auto& t : trees) {
            std::set<std::size_t> on_chain;
            std::size_t roots = 0, sinks = 0;
            for (std::size_t i = 0; i < t.nodes.size(); ++i) {
                const auto& n = t.nodes[i];
                // Constant peak.
                EXPECT_EQ(n.volume, t.peak);
                EXPECT_EQ(n.price, t.price);
                EXPECT_EQ(n.side, t.side);
                if (n.is_root()) ++roots;
                if (!n.child) ++sinks;
                // Window soundness.
                if (n.child) {
                    ASSERT_TRUE(n.deleted);
                    const auto gap = t.nodes[*n.child].placed.ms - n.deleted->ms;
                    EXPECT_GE(gap, 0);
                    EXPECT_LE(gap, dc.dt_ms());
                }
            }
            EXPECT_EQ(sinks, 1u);
            EXPECT_EQ(t.chains.size(), roots);
            for (const auto& c : t.chains) {
                on_chain.insert(c.nodes.begin(), c.nodes.end());
                EXPECT_EQ(c.volume, c.length * t.peak);
            }
            EXPECT_EQ(on_chain.size(), t.nodes.size());
        }

        // Determinism.
        const auto again = replay(sc.events, dc);
        ASSERT_EQ(again.size(), trees.size());
        for (std::size_t i = 0; i < trees.size(); ++i) {
            EXPECT_EQ(again[i].id, trees[i].id);
            EXPECT_EQ(lengths(again[i]), lengths(trees[i]));
        }
    }
}

TEST(Aggregate, TieBreaks) {
    // Longest: larger volume among equal lengths, then first.
    EXPECT_DOUBLE_EQ(aggregate({{3, 6}, {5, 10}, {5, 12}}, Aggregation::Longest), 12.0);
    EXPECT_DOUBLE_EQ(aggregate({{5, 10}, {5, 10}}, Aggregation::Longest), 10.0);
    // Unique: first representative per length.
    EXPECT_DOUBLE_EQ(aggregate({{4, 8}, {4, 9}, {2, 4}}, Aggregation::Unique), 6.0);
    EXPECT_DOUBLE_EQ(aggregate({{4, 8}, {4, 9}, {2, 4}}, Aggregation::All), 7.0);
}

TEST(DetectorConfig, Validation) {
    DetectorConfig c;
    c.dt_seconds = 0;
    EXPECT_ANY_THROW(c.validate());
    c = {};
    c.min_tranches = 1;
    EXPECT_ANY_THROW(c.validate());
    EXPECT_EQ(DetectorConfig{}.dt_ms(), 300);
}
