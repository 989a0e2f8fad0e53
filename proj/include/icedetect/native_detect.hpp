#pragma once

// Native (exchange-managed) iceberg reconstruction.
//
// Every placed order gets a tracker driven by the transition table below.
// "Traded" means volume traded against the order since its last Limit or
// Modify; "resting" is the volume that Limit/Modify displayed.
//
//   state        event                          next state / effect
//   -----------  -----------------------------  -------------------------------------------
//   Fresh        T (order is aggressor)         Fresh; pre-placement volume += v
//   Fresh        L                              Resting; peak candidates from (pre, V_L)
//   Fresh        M, D, T_A                      diagnostic StaleOrderId
//   Resting      T_A or T                       Resting; traded += v; traded > resting => ActiveIceberg
//   Resting      M, traded == resting > 0,      ActiveIceberg; refresh (new tranche)
//                V_M > 0
//   Resting      M otherwise                    Resting; resting = V_M
//   Resting      D                              Ordinary (dropped)
//   Resting      L                              diagnostic DuplicateLimit
//   Active       T_A or T                       Active; traded += v
//   Active       M, traded >= resting, V_M > 0  Active; refresh, peak refinement while ambiguous
//   Active       M otherwise                    Active; resting = V_M
//   Active       D                              Complete (residual 0) or Cancelled (residual > 0)
//   Active       L                              diagnostic DuplicateLimit
//   Resting      end of stream                  dropped
//   Active       end of stream                  Cancelled, residual counted as deleted volume
//
// Fresh is a single slot: pre-placement aggression belongs to the most recent
// aggressor id and is handed to its Limit when that arrives.

#include "core.hpp"
#include "lob_ingest.hpp"

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ice {

enum class NativeState : std::uint8_t { Fresh, Resting, Ordinary, ActiveIceberg, Complete, Cancelled };

enum class IcebergStatus : std::uint8_t { Complete, Cancelled };

inline std::string_view to_string(IcebergStatus s) { return s == IcebergStatus::Complete ? "complete" : "cancelled"; }

/// Admissible peak sizes after `pre_traded` units were executed aggressively
/// before the remaining `placed` units rested: every (pre+placed)/d that is an
/// integer no smaller than `placed`. Ascending.
inline std::vector<Volume> peak_candidates_initial(Volume pre_traded, Volume placed) {
    if (placed == 0) return {};
    if (pre_traded == 0) return {placed};
    const Volume sum = pre_traded + placed;
    std::vector<Volume> out;
    for (Volume d = 1; d * d <= sum; ++d) {
        if (sum % d != 0) continue;
        for (Volume c : {sum / d, d})
            if (c >= placed) out.push_back(c);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

struct EmptyCandidateSet {};

/// Narrows the peak candidates at a refresh. `traded` is the trade volume
/// accumulated since the last display update and `resting` that display. An
/// exact consumption makes the refresh volume the peak; an overflow keeps
/// candidates c with c == V_M + (traded - resting) mod c.
inline Expected<std::vector<Volume>, EmptyCandidateSet> peak_refine(const std::vector<Volume>& candidates,
                                                                    Volume modify_volume, Volume traded,
                                                                    Volume resting) {
    if (traded == resting) return std::vector<Volume>{modify_volume};
    const Volume overflow = traded - resting;
    std::vector<Volume> out;
    for (Volume c : candidates)
        if (c > 0 && modify_volume + overflow % c == c) out.push_back(c);
    if (out.empty()) return EmptyCandidateSet{};
    return out;
}

struct NativeIceberg {
    OrderId order_id = 0;
    Side side = Side::Buy;
    Price price;
    std::vector<Volume> peak_candidates;
    bool peak_indeterminate = false;
    /// One entry per visible tranche (the placement and every refresh).
    std::vector<Volume> tranche_volumes;
    /// Volume accumulated before each tranche, aligned with tranche_volumes.
    std::vector<Volume> tranche_accumulated;
    std::vector<Timestamp> tranche_times;
    Volume traded_volume = 0;
    Volume deleted_volume = 0;
    Volume total_volume = 0;
    IcebergStatus status = IcebergStatus::Complete;
    Timestamp first_time;
    Timestamp last_time;

    bool peak_precise() const { return peak_candidates.size() == 1; }
    std::optional<Volume> peak() const {
        return peak_precise() ? std::optional<Volume>(peak_candidates.front()) : std::nullopt;
    }

    friend bool operator==(const NativeIceberg&, const NativeIceberg&) = default;
};

enum class NativeDiagnostic : std::uint8_t { StaleOrderId, DuplicateLimit, ZeroVolumeLimit, EmptyCandidateSet, kCount };

inline std::string_view to_string(NativeDiagnostic d) {
    switch (d) {
        case NativeDiagnostic::StaleOrderId: return "stale_order_id";
        case NativeDiagnostic::DuplicateLimit: return "duplicate_limit";
        case NativeDiagnostic::ZeroVolumeLimit: return "zero_volume_limit";
        case NativeDiagnostic::EmptyCandidateSet: return "empty_candidate_set";
        case NativeDiagnostic::kCount: break;
    }
    return "?";
}

struct NativeTracker {
    struct Appearance {
        Volume displayed = 0;
        Volume hidden = 0;        // volume of this tranche consumed before it showed
        Volume traded_at = 0;     // cumulative traded volume when it showed
        Timestamp time;
    };

    OrderId order_id = 0;
    NativeState state = NativeState::Fresh;
    Side side = Side::Buy;
    Price price;
    Volume resting = 0;
    Volume traded_since_update = 0;
    Volume traded_total = 0;
    Volume last_modify = 0;
    std::vector<Volume> peak_candidates;
    bool peak_indeterminate = false;
    std::vector<Appearance> appearances;
    Timestamp first_time;
    Timestamp last_time;

    Volume residual() const { return resting > traded_since_update ? resting - traded_since_update : 0; }
};

class NativeDetector {
public:
    /// Feeds one event. Returns the iceberg finalized by it, if any.
    std::optional<NativeIceberg> apply(const OrderEvent& ev) {
        switch (ev.action) {
            case Action::Trade: on_trade(ev); return std::nullopt;
            case Action::Limit: on_limit(ev); return std::nullopt;
            case Action::Modify: on_modify(ev); return std::nullopt;
            case Action::Delete: return on_delete(ev);
        }
        return std::nullopt;
    }

    /// End of stream: active trackers become censored icebergs, ordinary ones
    /// are dropped. Output is ordered by order id.
    std::vector<NativeIceberg> finalize_all() {
        std::vector<NativeIceberg> out;
        for (auto& [id, t] : open_) {
            if (t.state != NativeState::ActiveIceberg) continue;
            out.push_back(finish(t, t.residual()));
        }
        open_.clear();
        aggressor_.reset();
        std::sort(out.begin(), out.end(),
                  [](const NativeIceberg& a, const NativeIceberg& b) { return a.order_id < b.order_id; });
        return out;
    }

    std::size_t open_count() const { return open_.size(); }
    std::size_t active_count() const {
        return static_cast<std::size_t>(std::count_if(open_.begin(), open_.end(), [](const auto& kv) {
            return kv.second.state == NativeState::ActiveIceberg;
        }));
    }
    const NativeTracker* tracker(OrderId id) const {
        auto it = open_.find(id);
        return it == open_.end() ? nullptr : &it->second;
    }
    std::size_t diagnostic_count(NativeDiagnostic d) const { return diag_[static_cast<std::size_t>(d)]; }
    std::size_t ordinary_count() const { return ordinary_; }

private:
    struct Aggressor {
        OrderId id = 0;
        Volume traded = 0;
        Timestamp first_time;
    };

    void bump(NativeDiagnostic d) { ++diag_[static_cast<std::size_t>(d)]; }

    static void add_trade(NativeTracker& t, Volume v, Timestamp time) {
        t.traded_since_update += v;
        t.traded_total += v;
        t.last_time = time;
        if (t.state == NativeState::Resting && t.traded_since_update > t.resting) t.state = NativeState::ActiveIceberg;
    }

    void on_trade(const OrderEvent& ev) {
        bool touched = false;
        if (ev.affected) {
            if (auto it = open_.find(*ev.affected); it != open_.end()) {
                add_trade(it->second, ev.volume, ev.time);
                touched = true;
            } else {
                bump(NativeDiagnostic::StaleOrderId);
            }
        }
        // The aggressor side: an already-placed order trading aggressively
        // after an undisclosed reprice, or an order not yet in the book.
        if (auto it = open_.find(ev.order_id); it != open_.end()) {
            if (!touched || *ev.affected != ev.order_id) add_trade(it->second, ev.volume, ev.time);
        } else if (aggressor_ && aggressor_->id == ev.order_id) {
            aggressor_->traded += ev.volume;
        } else {
            aggressor_ = Aggressor{ev.order_id, ev.volume, ev.time};
        }
    }

    void on_limit(const OrderEvent& ev) {
        if (open_.count(ev.order_id)) {
            bump(NativeDiagnostic::DuplicateLimit);
            return;
        }
        if (ev.volume == 0) {
            bump(NativeDiagnostic::ZeroVolumeLimit);
            return;
        }
        NativeTracker t;
        t.order_id = ev.order_id;
        t.side = ev.side;
        t.price = ev.price;
        t.state = NativeState::Resting;
        t.first_time = ev.time;
        Volume pre = 0;
        if (aggressor_ && aggressor_->id == ev.order_id) {
            pre = aggressor_->traded;
            t.first_time = aggressor_->first_time;
            aggressor_.reset();
        }
        t.traded_total = pre;
        t.resting = ev.volume;
        t.last_modify = ev.volume;
        t.last_time = ev.time;
        t.peak_candidates = peak_candidates_initial(pre, ev.volume);
        t.appearances.push_back({ev.volume, pre, pre, ev.time});
        open_.emplace(ev.order_id, std::move(t));
    }

    void on_modify(const OrderEvent& ev) {
        auto it = open_.find(ev.order_id);
        if (it == open_.end()) {
            bump(NativeDiagnostic::StaleOrderId);
            return;
        }
        NativeTracker& t = it->second;
        const bool refresh = t.traded_since_update > 0 && t.traded_since_update >= t.resting && ev.volume > 0;
        if (refresh) {
            const Volume overflow = t.traded_since_update - t.resting;
            t.state = NativeState::ActiveIceberg;
            if (t.peak_candidates.size() > 1) {
                auto refined = peak_refine(t.peak_candidates, ev.volume, t.traded_since_update, t.resting);
                if (refined) {
                    t.peak_candidates = std::move(refined).value();
                } else {
                    t.peak_indeterminate = true;
                    bump(NativeDiagnostic::EmptyCandidateSet);
                }
            }
            t.appearances.push_back({ev.volume, overflow, t.traded_total, ev.time});
        }
        t.resting = ev.volume;
        t.last_modify = ev.volume;
        t.traded_since_update = 0;
        t.price = ev.price;
        t.last_time = ev.time;
    }

    std::optional<NativeIceberg> on_delete(const OrderEvent& ev) {
        auto it = open_.find(ev.order_id);
        if (it == open_.end()) {
            bump(NativeDiagnostic::StaleOrderId);
            return std::nullopt;
        }
        NativeTracker& t = it->second;
        t.last_time = ev.time;
        std::optional<NativeIceberg> out;
        if (t.state == NativeState::ActiveIceberg)
            out = finish(t, t.residual());
        else
            ++ordinary_;
        open_.erase(it);
        return out;
    }

    static NativeIceberg finish(const NativeTracker& t, Volume residual) {
        NativeIceberg ice;
        ice.order_id = t.order_id;
        ice.side = t.side;
        ice.price = t.price;
        ice.peak_candidates = t.peak_candidates;
        ice.peak_indeterminate = t.peak_indeterminate || t.peak_candidates.size() != 1;
        ice.traded_volume = t.traded_total;
        ice.deleted_volume = residual;
        ice.total_volume = t.traded_total + residual;
        ice.status = residual == 0 ? IcebergStatus::Complete : IcebergStatus::Cancelled;
        ice.first_time = t.first_time;
        ice.last_time = t.last_time;
        // With an ambiguous peak the hidden part is reported unwrapped.
        const Volume peak = t.peak_candidates.size() == 1 ? t.peak_candidates.front() : 0;
        for (const auto& a : t.appearances) {
            const Volume hidden = peak > 0 ? a.hidden % peak : a.hidden;
            ice.tranche_volumes.push_back(a.displayed + hidden);
            ice.tranche_accumulated.push_back(a.traded_at - hidden);
            ice.tranche_times.push_back(a.time);
        }
        return ice;
    }

    std::unordered_map<OrderId, NativeTracker> open_;
    std::optional<Aggressor> aggressor_;
    std::array<std::size_t, static_cast<std::size_t>(NativeDiagnostic::kCount)> diag_{};
    std::size_t ordinary_ = 0;
};

}  // namespace ice
