#pragma once

// Synthetic (vendor-managed) iceberg detection via tranche trees.
//
// A resting Limit that is fully traded and then deleted opens a refill window
// of `dt`. The first Limit with the same (side, price, volume) whose placement
// falls within [delete, delete + dt] of one or more open windows becomes the
// single child of every one of them; a later Limit in the same window starts a
// new root. Because each node has at most one child, a tree has exactly one
// sink and one chain per root.

#include "core.hpp"
#include "lob_ingest.hpp"
#include "native_detect.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ice {

struct DetectorConfig {
    double dt_seconds = 0.3;
    int min_tranches = 3;
    int min_eval_chain = 3;

    std::int64_t dt_ms() const { return static_cast<std::int64_t>(std::llround(dt_seconds * 1000.0)); }

    void validate() const {
        if (!(dt_seconds > 0)) throw std::invalid_argument("dt must be positive");
        if (min_tranches < 2) throw std::invalid_argument("min_tranches must be at least 2");
        if (min_eval_chain < 1) throw std::invalid_argument("min_eval_chain must be at least 1");
    }
};

enum class Aggregation { All, Unique, Longest };

inline std::string_view to_string(Aggregation a) {
    switch (a) {
        case Aggregation::All: return "all";
        case Aggregation::Unique: return "unique";
        case Aggregation::Longest: return "longest";
    }
    return "?";
}

inline std::optional<Aggregation> parse_aggregation(std::string_view s) {
    if (s == "all") return Aggregation::All;
    if (s == "unique") return Aggregation::Unique;
    if (s == "longest") return Aggregation::Longest;
    return std::nullopt;
}

struct TrancheNode {
    OrderId order_id = 0;
    Volume volume = 0;
    Price price;
    Side side = Side::Buy;
    Timestamp placed;
    std::optional<Timestamp> deleted;
    std::optional<std::size_t> child;
    std::vector<std::size_t> parents;

    bool is_root() const { return parents.empty(); }
};

/// Root-to-sink path. `nodes` are indices into the owning tree.
struct Chain {
    std::vector<std::size_t> nodes;
    std::size_t length = 0;
    Volume volume = 0;
};

struct TrancheTree {
    std::uint64_t id = 0;
    Side side = Side::Buy;
    Price price;
    Volume peak = 0;
    IcebergStatus status = IcebergStatus::Complete;
    std::vector<TrancheNode> nodes;
    std::vector<Chain> chains;  // filled on finalization

    std::size_t sink() const {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (!nodes[i].child) return i;
        return nodes.size() - 1;
    }
    Timestamp first_time() const {
        Timestamp t = nodes.front().placed;
        for (const auto& n : nodes) t = std::min(t, n.placed);
        return t;
    }
    Timestamp last_time() const {
        const auto& s = nodes[sink()];
        return s.deleted ? *s.deleted : s.placed;
    }
    std::size_t max_chain_length() const {
        std::size_t m = 0;
        for (const auto& c : chains) m = std::max(m, c.length);
        return m;
    }
    std::size_t min_chain_length() const {
        std::size_t m = chains.empty() ? 0 : chains.front().length;
        for (const auto& c : chains) m = std::min(m, c.length);
        return m;
    }
};

/// One chain per root, ordered by root placement time then order id.
inline std::vector<Chain> chains(const TrancheTree& tree) {
    std::vector<std::size_t> roots;
    for (std::size_t i = 0; i < tree.nodes.size(); ++i)
        if (tree.nodes[i].is_root()) roots.push_back(i);
    std::sort(roots.begin(), roots.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = tree.nodes[a];
        const auto& y = tree.nodes[b];
        if (x.placed != y.placed) return x.placed < y.placed;
        return x.order_id < y.order_id;
    });
    std::vector<Chain> out;
    out.reserve(roots.size());
    for (std::size_t r : roots) {
        Chain c;
        std::optional<std::size_t> cur = r;
        while (cur) {
            c.nodes.push_back(*cur);
            c.volume += tree.nodes[*cur].volume;
            cur = tree.nodes[*cur].child;
        }
        c.length = c.nodes.size();
        out.push_back(std::move(c));
    }
    return out;
}

/// Aggregate over (length, volume) pairs. `unique` averages one volume per
/// distinct length; `longest` takes the longest, larger volume on ties, then
/// the first in order.
inline double aggregate(const std::vector<std::pair<std::size_t, double>>& items, Aggregation method) {
    if (items.empty()) return 0.0;
    switch (method) {
        case Aggregation::All: {
            double s = 0;
            for (const auto& it : items) s += it.second;
            return s / static_cast<double>(items.size());
        }
        case Aggregation::Unique: {
            std::map<std::size_t, double> rep;
            for (const auto& it : items) rep.emplace(it.first, it.second);
            double s = 0;
            for (const auto& [len, v] : rep) s += v;
            return s / static_cast<double>(rep.size());
        }
        case Aggregation::Longest: {
            const auto* best = &items.front();
            for (const auto& it : items)
                if (it.first > best->first || (it.first == best->first && it.second > best->second)) best = &it;
            return best->second;
        }
    }
    return 0.0;
}

inline double aggregate_volume(const TrancheTree& tree, Aggregation method) {
    const auto& cs = tree.chains.empty() ? chains(tree) : tree.chains;
    std::vector<std::pair<std::size_t, double>> items;
    items.reserve(cs.size());
    for (const auto& c : cs) items.emplace_back(c.length, static_cast<double>(c.volume));
    return aggregate(items, method);
}

/// Chains passing through `node`, with the number of tranches up to and
/// including it on each chain.
struct ChainPrefix {
    std::size_t chain = 0;
    std::size_t length = 0;
};

inline std::vector<ChainPrefix> chains_through(const TrancheTree& tree, std::size_t node) {
    std::vector<ChainPrefix> out;
    for (std::size_t ci = 0; ci < tree.chains.size(); ++ci) {
        const auto& c = tree.chains[ci];
        auto it = std::find(c.nodes.begin(), c.nodes.end(), node);
        if (it != c.nodes.end()) out.push_back({ci, static_cast<std::size_t>(it - c.nodes.begin()) + 1});
    }
    return out;
}

struct SyntheticCounters {
    std::size_t trees_finalized = 0;
    std::size_t trees_reported = 0;
    std::size_t trees_suppressed = 0;
    std::size_t merges = 0;
    std::size_t edges = 0;
    std::size_t tainted = 0;
    std::size_t stale = 0;
};

class SyntheticDetector {
public:
    explicit SyntheticDetector(DetectorConfig cfg = {}) : cfg_(cfg), dt_ms_(cfg.dt_ms()) { cfg_.validate(); }

    /// Feeds one event; trees it finalizes (and that pass min_tranches) are
    /// appended to `out`.
    void process(const OrderEvent& ev, std::vector<TrancheTree>& out) {
        now_ = std::max(now_, ev.time.ms);
        expire(out);
        switch (ev.action) {
            case Action::Limit: on_limit(ev); break;
            case Action::Trade: on_trade(ev); break;
            case Action::Modify: on_modify(ev); break;
            case Action::Delete: on_delete(ev, out); break;
        }
    }

    std::vector<TrancheTree> process(const OrderEvent& ev) {
        std::vector<TrancheTree> out;
        process(ev, out);
        return out;
    }

    /// End of stream: open windows close as complete; trees whose sink still
    /// rests are censored (cancelled). Ordered by tree id.
    std::vector<TrancheTree> finish() {
        std::vector<std::uint64_t> ids;
        ids.reserve(trees_.size());
        for (const auto& [id, _] : trees_) ids.push_back(id);
        std::sort(ids.begin(), ids.end());
        std::vector<TrancheTree> out;
        for (auto id : ids) {
            auto& st = trees_.at(id);
            finalize(id, st.pending ? IcebergStatus::Complete : IcebergStatus::Cancelled, out);
        }
        open_.clear();
        pending_.clear();
        expiry_ = {};
        return out;
    }

    const SyntheticCounters& counters() const { return counters_; }
    const DetectorConfig& config() const { return cfg_; }
    std::size_t live_trees() const { return trees_.size(); }
    std::size_t open_orders() const { return open_.size(); }

private:
    struct Key {
        Side side;
        std::int64_t price;
        Volume volume;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const noexcept {
            std::size_t h = std::hash<std::int64_t>{}(k.price);
            h ^= std::hash<Volume>{}(k.volume) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
            return h ^ static_cast<std::size_t>(k.side);
        }
    };
    struct OpenOrder {
        std::uint64_t tree = 0;
        std::size_t node = 0;
        Volume resting = 0;
        Volume traded = 0;
        bool tainted = false;
    };
    struct LiveTree {
        TrancheTree tree;
        bool pending = false;
        std::int64_t deleted_ms = 0;
    };
    struct Expiry {
        std::int64_t deadline;
        std::uint64_t tree;
        bool operator>(const Expiry& o) const { return deadline != o.deadline ? deadline > o.deadline : tree > o.tree; }
    };

    static Key key_of(Side s, Price p, Volume v) { return Key{s, p.units(), v}; }

    void expire(std::vector<TrancheTree>& out) {
        while (!expiry_.empty() && expiry_.top().deadline < now_) {
            Expiry e = expiry_.top();
            expiry_.pop();
            auto it = trees_.find(e.tree);
            if (it == trees_.end() || !it->second.pending || it->second.deleted_ms + dt_ms_ != e.deadline) continue;
            drop_pending(e.tree, it->second);
            finalize(e.tree, IcebergStatus::Complete, out);
        }
    }

    void drop_pending(std::uint64_t id, LiveTree& lt) {
        const auto& t = lt.tree;
        auto k = key_of(t.side, t.price, t.peak);
        auto pit = pending_.find(k);
        if (pit != pending_.end()) {
            auto& v = pit->second;
            v.erase(std::remove(v.begin(), v.end(), id), v.end());
            if (v.empty()) pending_.erase(pit);
        }
        lt.pending = false;
    }

    void on_limit(const OrderEvent& ev) {
        if (ev.volume == 0) return;
        if (open_.count(ev.order_id)) {
            ++counters_.stale;
            return;
        }
        TrancheNode node;
        node.order_id = ev.order_id;
        node.volume = ev.volume;
        node.price = ev.price;
        node.side = ev.side;
        node.placed = ev.time;

        const Key k = key_of(ev.side, ev.price, ev.volume);
        std::vector<std::uint64_t> parents;
        if (auto pit = pending_.find(k); pit != pending_.end()) {
            for (auto id : pit->second) {
                const auto& lt = trees_.at(id);
                const std::int64_t gap = ev.time.ms - lt.deleted_ms;
                if (gap >= 0 && gap <= dt_ms_) parents.push_back(id);
            }
        }

        if (parents.empty()) {
            const std::uint64_t id = next_tree_id_++;
            LiveTree lt;
            lt.tree.id = id;
            lt.tree.side = ev.side;
            lt.tree.price = ev.price;
            lt.tree.peak = ev.volume;
            lt.tree.nodes.push_back(std::move(node));
            trees_.emplace(id, std::move(lt));
            open_[ev.order_id] = OpenOrder{id, 0, ev.volume, 0, false};
            return;
        }

        // Merge every parent tree into the oldest one, then hang the node
        // below each parent's sink.
        std::sort(parents.begin(), parents.end());
        const std::uint64_t base_id = parents.front();
        for (auto id : parents) drop_pending(id, trees_.at(id));
        LiveTree& base = trees_.at(base_id);
        std::vector<std::size_t> sinks{base.tree.sink()};
        for (std::size_t i = 1; i < parents.size(); ++i) {
            auto it = trees_.find(parents[i]);
            TrancheTree other = std::move(it->second.tree);
            trees_.erase(it);
            const std::size_t offset = base.tree.nodes.size();
            const std::size_t other_sink = other.sink();
            for (auto& n : other.nodes) {
                if (n.child) *n.child += offset;
                for (auto& p : n.parents) p += offset;
                base.tree.nodes.push_back(std::move(n));
            }
            sinks.push_back(other_sink + offset);
            ++counters_.merges;
        }
        const std::size_t idx = base.tree.nodes.size();
        for (auto s : sinks) {
            base.tree.nodes[s].child = idx;
            node.parents.push_back(s);
            ++counters_.edges;
        }
        base.tree.nodes.push_back(std::move(node));
        open_[ev.order_id] = OpenOrder{base_id, idx, ev.volume, 0, false};
    }

    void on_trade(const OrderEvent& ev) {
        if (!ev.affected) return;
        if (auto it = open_.find(*ev.affected); it != open_.end()) it->second.traded += ev.volume;
    }

    void on_modify(const OrderEvent& ev) {
        auto it = open_.find(ev.order_id);
        if (it == open_.end()) return;
        OpenOrder& o = it->second;
        const Volume remaining = o.resting > o.traded ? o.resting - o.traded : 0;
        const auto& t = trees_.at(o.tree).tree;
        // Anything beyond bookkeeping after a partial fill breaks the
        // constant-peak assumption for this node.
        if (ev.volume != remaining || o.traded > o.resting || ev.price != t.price) {
            if (!o.tainted) ++counters_.tainted;
            o.tainted = true;
        }
        o.resting = ev.volume;
        o.traded = 0;
    }

    void on_delete(const OrderEvent& ev, std::vector<TrancheTree>& out) {
        auto it = open_.find(ev.order_id);
        if (it == open_.end()) return;
        OpenOrder o = it->second;
        open_.erase(it);
        auto& lt = trees_.at(o.tree);
        lt.tree.nodes[o.node].deleted = ev.time;
        const bool fully_traded = o.traded >= o.resting;
        if (!fully_traded) {
            finalize(o.tree, IcebergStatus::Cancelled, out);
            return;
        }
        if (o.tainted) {
            finalize(o.tree, IcebergStatus::Complete, out);
            return;
        }
        lt.pending = true;
        lt.deleted_ms = ev.time.ms;
        pending_[key_of(lt.tree.side, lt.tree.price, lt.tree.peak)].push_back(o.tree);
        expiry_.push(Expiry{ev.time.ms + dt_ms_, o.tree});
    }

    void finalize(std::uint64_t id, IcebergStatus status, std::vector<TrancheTree>& out) {
        auto it = trees_.find(id);
        TrancheTree t = std::move(it->second.tree);
        trees_.erase(it);
        t.status = status;
        t.chains = chains(t);
        ++counters_.trees_finalized;
        if (t.max_chain_length() >= static_cast<std::size_t>(cfg_.min_tranches)) {
            ++counters_.trees_reported;
            out.push_back(std::move(t));
        } else {
            ++counters_.trees_suppressed;
        }
    }

    DetectorConfig cfg_;
    std::int64_t dt_ms_;
    std::int64_t now_ = std::numeric_limits<std::int64_t>::min();
    std::uint64_t next_tree_id_ = 1;
    std::unordered_map<OrderId, OpenOrder> open_;
    std::unordered_map<std::uint64_t, LiveTree> trees_;
    std::unordered_map<Key, std::vector<std::uint64_t>, KeyHash> pending_;
    std::priority_queue<Expiry, std::vector<Expiry>, std::greater<>> expiry_;
    SyntheticCounters counters_;
};

}  // namespace ice
