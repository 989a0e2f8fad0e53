#pragma once

// Scenario generator: order logs with embedded native and synthetic icebergs,
// decoy flow, and a ground-truth list for scoring the detectors.
//
// Each iceberg or decoy is produced as a script of timed events; scripts are
// merged by (time, script, position), so one script's events at a given
// millisecond stay contiguous. Synthetic icebergs reserve their
// (side, price, peak) key for their lifetime plus dt on both ends; natives
// and ordinary decoys avoid reserved keys, so only the deliberate
// simultaneous-delete injections interact with a synthetic chain.

#include "core.hpp"
#include "lob_ingest.hpp"
#include "native_detect.hpp"
#include "synthetic_detect.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace ice {

class ConfigError : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A native iceberg with fixed parameters, e.g. to re-create a known example.
struct NativeSpec {
    Volume peak = 9;
    Volume total = 43;
    Volume aggression = 0;
};

struct ScenarioConfig {
    std::uint64_t seed = 1;
    std::size_t native_icebergs = 20;
    std::size_t synthetic_icebergs = 20;
    std::vector<NativeSpec> scripted_natives;

    Volume peak_min = 2;
    Volume peak_max = 20;
    std::size_t tranches_min = 3;
    std::size_t tranches_max = 8;

    double cancel_prob = 0.2;
    double aggression_prob = 0.3;
    double partial_last_prob = 0.5;

    double dt_truth = 0.3;
    std::int64_t delay_min_ms = 1;
    std::int64_t delay_max_ms = 200;

    std::size_t decoys = 0;
    double simultaneous_delete_rate = 0.0;

    std::int64_t start_ms = 9 * 3'600'000LL + 30 * 60'000LL;
    std::int64_t horizon_ms = 3'600'000;
    OrderId first_order_id = 100'000'000'000ULL;
    double base_price = 2900.0;
    double tick = 0.25;
    int levels = 40;

    std::int64_t dt_truth_ms() const { return static_cast<std::int64_t>(std::llround(dt_truth * 1000.0)); }

    void validate() const {
        auto rate = [](double r, const char* name) {
            if (!(r >= 0.0 && r <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
        };
        rate(cancel_prob, "cancel_prob");
        rate(aggression_prob, "aggression_prob");
        rate(partial_last_prob, "partial_last_prob");
        rate(simultaneous_delete_rate, "simultaneous_delete_rate");
        if (!(dt_truth > 0)) throw ConfigError("dt_truth must be positive");
        if (delay_min_ms < 1 || delay_max_ms < delay_min_ms || delay_max_ms > dt_truth_ms())
            throw ConfigError("refill delays must satisfy 1 <= min <= max <= dt_truth");
        if (peak_min < 1 || peak_max < peak_min) throw ConfigError("peak range invalid");
        if (tranches_min < 1 || tranches_max < tranches_min) throw ConfigError("tranche range invalid");
        if (levels < 1 || !(tick > 0) || !(base_price > 0)) throw ConfigError("price ladder invalid");
        if (horizon_ms < 1 || start_ms < 0) throw ConfigError("time range invalid");
        for (const auto& s : scripted_natives)
            if (s.peak < 1 || s.total <= s.aggression + s.peak)
                throw ConfigError("scripted native needs total > aggression + peak");
    }
};

enum class IcebergKind { Native, Synthetic };

inline std::string_view to_string(IcebergKind k) { return k == IcebergKind::Native ? "native" : "synthetic"; }

struct TruthRecord {
    std::string id;
    IcebergKind kind = IcebergKind::Native;
    Volume peak = 0;
    Volume total = 0;
    IcebergStatus status = IcebergStatus::Complete;
    std::vector<OrderId> tranche_order_ids;

    friend bool operator==(const TruthRecord&, const TruthRecord&) = default;
};

struct Scenario {
    std::vector<OrderEvent> events;
    std::vector<TruthRecord> truth;
};

class ScenarioGenerator {
public:
    explicit ScenarioGenerator(ScenarioConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed), next_id_(cfg_.first_order_id) {
        cfg_.validate();
        dt_ms_ = cfg_.dt_truth_ms();
    }

    Scenario generate() {
        Scenario sc;
        for (std::size_t i = 0; i < cfg_.synthetic_icebergs; ++i) sc.truth.push_back(synthetic(i + 1));
        std::size_t n = 0;
        for (const auto& spec : cfg_.scripted_natives) {
            auto tranches = split_visible(spec.peak, spec.total - (spec.aggression / spec.peak) * spec.peak);
            sc.truth.push_back(native(++n, spec.peak, tranches, spec.aggression, false, false));
        }
        for (std::size_t i = 0; i < cfg_.native_icebergs; ++i) sc.truth.push_back(random_native(++n));
        for (std::size_t i = 0; i < cfg_.decoys; ++i) decoy();
        sc.events = merge();
        return sc;
    }

private:
    struct Key {
        Side side;
        int level;
        Volume volume;
        auto operator<=>(const Key&) const = default;
    };
    struct Scripted {
        std::int64_t t;
        OrderEvent ev;
    };
    using Script = std::vector<Scripted>;

    std::uint64_t uniform(std::uint64_t lo, std::uint64_t hi) {
        return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng_);
    }
    std::int64_t uniform_t(std::int64_t lo, std::int64_t hi) {
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng_);
    }
    bool coin(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p; }
    Side random_side() { return coin(0.5) ? Side::Buy : Side::Sell; }
    static Side other(Side s) { return s == Side::Buy ? Side::Sell : Side::Buy; }
    Price price_of(int level) const { return Price::from_double(cfg_.base_price + cfg_.tick * level); }
    OrderId fresh_id() { return next_id_++; }

    OrderEvent make(Action a, OrderId id, Side s, int level, Volume v, std::optional<OrderId> affected = {}) const {
        OrderEvent ev;
        ev.order_id = id;
        ev.side = s;
        ev.action = a;
        ev.price = price_of(level);
        ev.volume = v;
        ev.affected = affected;
        return ev;
    }

    /// Visible tranches for `visible` units: full peaks then the remainder.
    static std::vector<Volume> split_visible(Volume peak, Volume visible) {
        std::vector<Volume> out(visible / peak, peak);
        if (visible % peak) out.push_back(visible % peak);
        return out;
    }

    bool conflicts(const Key& k, std::int64_t a, std::int64_t b) const {
        auto it = reserved_.find(k);
        if (it == reserved_.end()) return false;
        for (const auto& [ra, rb] : it->second)
            if (a <= rb + dt_ms_ + 1 && b >= ra - dt_ms_ - 1) return true;
        return false;
    }

    /// Shifts a relative script to the first start >= t0 that keeps it clear
    /// of other reservations on the same key.
    std::int64_t place_clear(const Key& k, std::int64_t t0, std::int64_t length) const {
        bool moved = true;
        while (moved) {
            moved = false;
            auto it = reserved_.find(k);
            if (it == reserved_.end()) break;
            for (const auto& [ra, rb] : it->second) {
                if (t0 <= rb + dt_ms_ + 1 && t0 + length >= ra - dt_ms_ - 1) {
                    t0 = rb + dt_ms_ + 2;
                    moved = true;
                }
            }
        }
        return t0;
    }

    void commit(Script s, std::int64_t offset) {
        for (auto& e : s) {
            e.t += offset;
            e.ev.time = Timestamp{e.t, false};
        }
        scripts_.push_back(std::move(s));
    }

    TruthRecord synthetic(std::size_t index) {
        const Side side = random_side();
        const int level = static_cast<int>(uniform(0, static_cast<std::uint64_t>(cfg_.levels - 1)));
        const Volume peak = uniform(cfg_.peak_min, cfg_.peak_max);
        const std::size_t n = uniform(cfg_.tranches_min, cfg_.tranches_max);
        const bool cancelled = coin(cfg_.cancel_prob);
        const Side taker = other(side);

        TruthRecord truth;
        truth.id = "S" + std::to_string(index);
        truth.kind = IcebergKind::Synthetic;
        truth.peak = peak;
        truth.total = peak * n;
        truth.status = cancelled ? IcebergStatus::Cancelled : IcebergStatus::Complete;

        Script s;
        std::int64_t t = 0;
        for (std::size_t k = 0; k < n; ++k) {
            const OrderId id = fresh_id();
            truth.tranche_order_ids.push_back(id);
            s.push_back({t, make(Action::Limit, id, side, level, peak)});
            const std::int64_t rest = uniform_t(5, 2000);
            const bool last = k + 1 == n;
            if (last && cancelled) {
                if (peak > 1 && coin(0.5)) {
                    const Volume q = uniform(1, peak - 1);
                    s.push_back({t + rest / 2, make(Action::Trade, fresh_id(), taker, level, q, id)});
                    s.push_back({t + rest / 2, make(Action::Modify, id, side, level, peak - q)});
                }
                s.push_back({t + rest, make(Action::Delete, id, side, level, peak)});
                break;
            }
            const bool inject = !last && coin(cfg_.simultaneous_delete_rate);
            OrderId twin = 0;
            if (inject) {
                twin = fresh_id();
                s.push_back({t + 1, make(Action::Limit, twin, side, level, peak)});
            }
            if (peak > 1 && coin(0.4)) {
                const Volume q = uniform(1, peak - 1);
                s.push_back({t + rest / 2, make(Action::Trade, fresh_id(), taker, level, q, id)});
                s.push_back({t + rest / 2, make(Action::Modify, id, side, level, peak - q)});
                s.push_back({t + rest, make(Action::Trade, fresh_id(), taker, level, peak - q, id)});
            } else {
                s.push_back({t + rest, make(Action::Trade, fresh_id(), taker, level, peak, id)});
            }
            if (inject) s.push_back({t + rest, make(Action::Trade, fresh_id(), taker, level, peak, twin)});
            s.push_back({t + rest, make(Action::Delete, id, side, level, peak)});
            if (inject) s.push_back({t + rest, make(Action::Delete, twin, side, level, peak)});
            t += rest + (last ? 0 : uniform_t(cfg_.delay_min_ms, cfg_.delay_max_ms));
        }

        const Key key{side, level, peak};
        const std::int64_t t0 = place_clear(key, cfg_.start_ms + uniform_t(0, cfg_.horizon_ms), t);
        reserved_[key].emplace_back(t0, t0 + t);
        commit(std::move(s), t0);
        return truth;
    }

    /// Picks a level whose key is clear over [t0, t0 + length]; -1 if none.
    int clear_level(Side side, Volume volume, std::int64_t t0, std::int64_t length) {
        for (int tries = 0; tries < 16; ++tries) {
            const int level = static_cast<int>(uniform(0, static_cast<std::uint64_t>(cfg_.levels - 1)));
            if (!conflicts(Key{side, level, volume}, t0, t0 + length)) return level;
        }
        return -1;
    }

    TruthRecord random_native(std::size_t index) {
        const Volume peak = uniform(std::max<Volume>(cfg_.peak_min, 2), std::max<Volume>(cfg_.peak_max, 2));
        const bool aggress = coin(cfg_.aggression_prob);
        std::size_t n = uniform(std::max<std::size_t>(cfg_.tranches_min, 2), std::max<std::size_t>(cfg_.tranches_max, 2));
        if (aggress) n = std::max<std::size_t>(n, 3);
        std::vector<Volume> tranches(n, peak);
        if (coin(cfg_.partial_last_prob)) tranches.back() = uniform(1, peak - 1);
        Volume aggression = 0;
        if (aggress) aggression = uniform(0, 1) * peak + uniform(1, peak - 1);
        // Cancellation after at least one refresh, at a later visible tranche.
        const bool cancel = coin(cfg_.cancel_prob);
        return native(index, peak, tranches, aggression, cancel, true);
    }

    /// `tranches` are the visible tranche sizes, the first always a full
    /// peak; `aggression` units execute before placement, consuming whole
    /// peaks plus part of the first visible tranche. Without `overshoot`
    /// no trade crosses a tranche boundary.
    TruthRecord native(std::size_t index, Volume peak, std::vector<Volume> tranches, Volume aggression, bool cancel,
                       bool overshoot) {
        const OrderId id = fresh_id();
        const Side side = random_side();
        const Side taker = other(side);

        Script s;
        std::int64_t t = 0;
        Volume traded = 0;
        const Volume consumed_first = aggression % peak;
        if (aggression > 0) {
            Volume left = aggression;
            const int parts = static_cast<int>(uniform(1, 3));
            for (int i = 0; i < parts && left > 0; ++i) {
                const Volume q = i + 1 == parts ? left : uniform(1, left);
                s.push_back({t, make(Action::Trade, id, side, 0, q, fresh_id())});
                left -= q;
            }
            traded += aggression;
        }
        std::deque<Volume> queue(tranches.begin() + 1, tranches.end());
        Volume display = tranches.front() - consumed_first;
        const Volume placed = display;
        s.push_back({t, make(Action::Limit, id, side, 0, placed)});

        const std::size_t cancel_at = cancel && tranches.size() > 1 ? uniform(1, tranches.size() - 1) : tranches.size();
        std::size_t tranche_index = 0;
        bool first_trade = true;
        Volume residual = 0;
        IcebergStatus status = IcebergStatus::Complete;
        while (true) {
            t += coin(0.3) ? 0 : uniform_t(1, 500);
            Volume remaining_total = display;
            for (Volume q : queue) remaining_total += q;
            Volume q;
            if (first_trade && aggression > 0)
                q = display;  // an exact first fill pins the peak down
            else if (!overshoot || coin(0.6))
                q = uniform(1, display);
            else
                q = std::min<Volume>(remaining_total, uniform(display + 1, display + peak));
            first_trade = false;
            s.push_back({t, make(Action::Trade, fresh_id(), taker, 0, q, id)});
            traded += q;
            while (q > 0) {
                const Volume take = std::min(q, display);
                display -= take;
                q -= take;
                if (display == 0 && !queue.empty() && q > 0) {
                    display = queue.front();
                    queue.pop_front();
                    ++tranche_index;
                }
            }
            if (display == 0 && !queue.empty()) {
                display = queue.front();
                queue.pop_front();
                ++tranche_index;
            }
            if (display == 0) {
                s.push_back({t, make(Action::Delete, id, side, 0, 0)});
                break;
            }
            s.push_back({t, make(Action::Modify, id, side, 0, display)});
            if (tranche_index >= cancel_at && coin(0.5)) {
                t += uniform_t(1, 1000);
                residual = display;
                status = IcebergStatus::Cancelled;
                s.push_back({t, make(Action::Delete, id, side, 0, display)});
                break;
            }
        }

        // Fix the price level now that the lifetime is known.
        const std::int64_t t0 = cfg_.start_ms + uniform_t(0, cfg_.horizon_ms);
        int level = clear_level(side, placed, t0, t);
        if (level < 0) level = 0;
        for (auto& e : s) e.ev.price = price_of(level);
        commit(std::move(s), t0);

        TruthRecord truth;
        truth.id = "N" + std::to_string(index);
        truth.kind = IcebergKind::Native;
        truth.peak = peak;
        truth.total = traded + residual;
        truth.status = status;
        truth.tranche_order_ids = {id};
        return truth;
    }

    /// Ordinary flow: sizes favour multiples of five.
    void decoy() {
        const Side side = random_side();
        const Volume v = coin(0.6) ? 5 * uniform(1, 20) : uniform(1, 50);
        const std::int64_t life = uniform_t(10, 30'000);
        const std::int64_t t0 = cfg_.start_ms + uniform_t(0, cfg_.horizon_ms);
        const int fate = static_cast<int>(uniform(0, 3));
        const int level = clear_level(side, v, t0, life);
        if (level < 0) return;
        const OrderId id = fresh_id();
        Script s;
        s.push_back({0, make(Action::Limit, id, side, level, v)});
        if (fate == 2 && v > 1) {
            const Volume q = uniform(1, v - 1);
            s.push_back({life / 2, make(Action::Trade, fresh_id(), other(side), level, q, id)});
            s.push_back({life / 2, make(Action::Modify, id, side, level, v - q)});
        } else if (fate == 3) {
            s.push_back({life, make(Action::Trade, fresh_id(), other(side), level, v, id)});
        }
        s.push_back({life, make(Action::Delete, id, side, level, v)});
        commit(std::move(s), t0);
    }

    std::vector<OrderEvent> merge() {
        std::vector<std::tuple<std::int64_t, std::size_t, std::size_t>> order;
        for (std::size_t i = 0; i < scripts_.size(); ++i)
            for (std::size_t j = 0; j < scripts_[i].size(); ++j) order.emplace_back(scripts_[i][j].t, i, j);
        std::sort(order.begin(), order.end());
        std::vector<OrderEvent> out;
        out.reserve(order.size());
        for (const auto& [t, i, j] : order) out.push_back(scripts_[i][j].ev);
        scripts_.clear();
        return out;
    }

    ScenarioConfig cfg_;
    std::mt19937_64 rng_;
    OrderId next_id_;
    std::int64_t dt_ms_ = 300;
    std::vector<Script> scripts_;
    std::map<Key, std::vector<std::pair<std::int64_t, std::int64_t>>> reserved_;
};

inline Scenario generate(const ScenarioConfig& cfg) { return ScenarioGenerator(cfg).generate(); }

/// Appends independent scenarios, each shifted past the previous one in time
/// and order ids, until at least `target_events` events have been handed to
/// `on_chunk(Scenario&&, chunk_index)`. Returns the number of events. Throws
/// ConfigError when a chunk would run past the end of the day.
template <class OnChunk>
std::size_t generate_until(ScenarioConfig cfg, std::size_t target_events, OnChunk&& on_chunk) {
    std::size_t written = 0, chunk = 0;
    do {
        if (cfg.start_ms + cfg.horizon_ms >= Timestamp::kDayMs)
            throw ConfigError("event target does not fit in one day; shorten the horizon or add decoys");
        auto sc = generate(cfg);
        const std::size_t n = sc.events.size();
        std::int64_t last_ms = cfg.start_ms;
        OrderId max_id = cfg.first_order_id;
        for (const auto& ev : sc.events) {
            max_id = std::max(max_id, ev.order_id);
            if (ev.affected) max_id = std::max(max_id, *ev.affected);
            last_ms = std::max(last_ms, ev.time.ms);
        }
        if (last_ms >= Timestamp::kDayMs) throw ConfigError("scenario runs past the end of the day");
        on_chunk(std::move(sc), chunk);
        written += n;
        if (n == 0) break;
        cfg.start_ms = last_ms + 1000;
        cfg.first_order_id = max_id + 1;
        ++cfg.seed;
        ++chunk;
    } while (written < target_events);
    return written;
}

inline void write_log(std::span<const OrderEvent> events, std::ostream& out, bool header = true) {
    if (header) out << kLogHeader << '\n';
    for (const auto& ev : events) out << serialize_record(ev) << '\n';
}

inline void write_truth(std::span<const TruthRecord> truth, std::ostream& out) {
    out << "iceberg_id,kind,peak,total,status,tranche_order_ids\n";
    for (const auto& t : truth) {
        out << t.id << ',' << to_string(t.kind) << ',' << t.peak << ',' << t.total << ',' << to_string(t.status) << ',';
        for (std::size_t i = 0; i < t.tranche_order_ids.size(); ++i) out << (i ? ";" : "") << t.tranche_order_ids[i];
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Scoring detections against truth

struct KindScore {
    std::size_t truth = 0;
    std::size_t detected = 0;
    std::size_t matched_truth = 0;      // truths hit by some detection
    std::size_t matched_detected = 0;   // detections overlapping some truth
    std::size_t peak_agree = 0;
    std::size_t total_agree = 0;

    double recall() const { return truth ? static_cast<double>(matched_truth) / static_cast<double>(truth) : 1.0; }
    double precision() const {
        return detected ? static_cast<double>(matched_detected) / static_cast<double>(detected) : 1.0;
    }
};

struct TruthScore {
    KindScore native;
    KindScore synthetic;
};

namespace detail {

struct Detected {
    std::vector<OrderId> ids;
    std::optional<Volume> peak;
    Volume total = 0;
};

inline KindScore score_kind(const std::vector<Detected>& detected, const std::vector<const TruthRecord*>& truth) {
    KindScore ks;
    ks.truth = truth.size();
    ks.detected = detected.size();
    std::unordered_map<OrderId, std::size_t> owner;
    for (std::size_t i = 0; i < truth.size(); ++i)
        for (OrderId id : truth[i]->tranche_order_ids) owner.emplace(id, i);
    // Best-overlap detection per truth.
    std::vector<std::size_t> best_overlap(truth.size(), 0);
    std::vector<const Detected*> best(truth.size(), nullptr);
    for (const auto& d : detected) {
        std::map<std::size_t, std::size_t> overlap;
        for (OrderId id : d.ids)
            if (auto it = owner.find(id); it != owner.end()) ++overlap[it->second];
        if (overlap.empty()) continue;
        ++ks.matched_detected;
        for (const auto& [ti, n] : overlap)
            if (n > best_overlap[ti]) {
                best_overlap[ti] = n;
                best[ti] = &d;
            }
    }
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!best[i]) continue;
        ++ks.matched_truth;
        if (best[i]->peak && *best[i]->peak == truth[i]->peak) ++ks.peak_agree;
        if (best[i]->total == truth[i]->total) ++ks.total_agree;
    }
    return ks;
}

}  // namespace detail

/// Matches detections to truth by shared order ids. Synthetic totals are
/// compared through the longest-chain volume.
inline TruthScore score_against_truth(std::span<const NativeIceberg> natives, std::span<const TrancheTree> trees,
                                      std::span<const TruthRecord> truth) {
    std::vector<const TruthRecord*> tn, ts;
    for (const auto& t : truth) (t.kind == IcebergKind::Native ? tn : ts).push_back(&t);

    std::vector<detail::Detected> dn, ds;
    for (const auto& n : natives) dn.push_back({{n.order_id}, n.peak(), n.total_volume});
    for (const auto& tr : trees) {
        detail::Detected d;
        for (const auto& node : tr.nodes) d.ids.push_back(node.order_id);
        d.peak = tr.peak;
        d.total = static_cast<Volume>(std::llround(aggregate_volume(tr, Aggregation::Longest)));
        ds.push_back(std::move(d));
    }
    return {detail::score_kind(dn, tn), detail::score_kind(ds, ts)};
}

/// True when some chain of the tree visits exactly `ids`, root first.
inline bool chain_present(const TrancheTree& tree, std::span<const OrderId> ids) {
    const auto& cs = tree.chains.empty() ? chains(tree) : tree.chains;
    for (const auto& c : cs) {
        if (c.nodes.size() != ids.size()) continue;
        bool same = true;
        for (std::size_t i = 0; i < ids.size() && same; ++i) same = tree.nodes[c.nodes[i]].order_id == ids[i];
        if (same) return true;
    }
    return false;
}

}  // namespace ice
