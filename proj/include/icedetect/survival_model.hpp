#pragma once

// Weighted Kaplan-Meier estimate of total iceberg volume per peak size.
//
// For sorted unique volumes u_1 < ... < u_K:
//   d_j = sum of weights of complete observations at u_j
//   n_j = sum of weights of all observations with volume >= u_j
//   S(u_j) = prod_{k<=j} (1 - d_k / n_k)
//   f(u_j) = S(u_{j-1}) - S(u_j), S(u_0) = 1, rescaled to sum to one when the
//   largest volume carries only censored mass.

#include "native_detect.hpp"
#include "synthetic_detect.hpp"

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

namespace ice {

struct VolumeObservation {
    Volume peak = 0;
    Volume volume = 0;
    double weight = 1.0;
    bool censored = false;

    friend bool operator==(const VolumeObservation&, const VolumeObservation&) = default;
};

struct PeakDistribution {
    Volume peak = 0;
    std::vector<Volume> support;
    std::vector<double> events;    // weighted d_j
    std::vector<double> at_risk;   // weighted n_j
    std::vector<double> survival;
    std::vector<double> pmf;
    std::size_t observations = 0;
    /// No complete observation at all: the pmf is undefined.
    bool degenerate = false;

    double mass_at(Volume v) const {
        auto it = std::lower_bound(support.begin(), support.end(), v);
        if (it == support.end() || *it != v) return 0.0;
        return pmf[static_cast<std::size_t>(it - support.begin())];
    }

    friend bool operator==(const PeakDistribution&, const PeakDistribution&) = default;
};

/// Survival values from (d, n) by the cumulative product.
inline std::vector<double> km_survival(const std::vector<double>& events, const std::vector<double>& at_risk) {
    std::vector<double> s(events.size());
    double acc = 1.0;
    for (std::size_t j = 0; j < events.size(); ++j) {
        acc *= 1.0 - events[j] / at_risk[j];
        s[j] = acc;
    }
    return s;
}

/// Raw pmf from survival values, then rescaled to unit mass when possible.
inline std::vector<double> km_pmf(const std::vector<double>& survival) {
    std::vector<double> f(survival.size());
    double prev = 1.0, total = 0.0;
    for (std::size_t j = 0; j < survival.size(); ++j) {
        f[j] = prev - survival[j];
        if (f[j] < 0) f[j] = 0;  // rounding
        prev = survival[j];
        total += f[j];
    }
    if (total > 0)
        for (auto& x : f) x /= total;
    return f;
}

/// Fits one peak's distribution. All observations must share the peak.
inline PeakDistribution fit(std::span<const VolumeObservation> obs) {
    if (obs.empty()) throw std::invalid_argument("fit: no observations");
    PeakDistribution d;
    d.peak = obs.front().peak;
    d.observations = obs.size();

    std::map<Volume, std::pair<double, double>> by_volume;  // volume -> (event weight, all weight)
    for (const auto& o : obs) {
        if (o.peak != d.peak) throw std::invalid_argument("fit: mixed peak sizes");
        if (!(o.weight > 0.0 && o.weight <= 1.0)) throw std::invalid_argument("fit: weight outside (0, 1]");
        auto& slot = by_volume[o.volume];
        if (!o.censored) slot.first += o.weight;
        slot.second += o.weight;
    }

    const std::size_t k = by_volume.size();
    d.support.reserve(k);
    d.events.reserve(k);
    std::vector<double> all;
    all.reserve(k);
    for (const auto& [v, w] : by_volume) {
        d.support.push_back(v);
        d.events.push_back(w.first);
        all.push_back(w.second);
    }
    d.at_risk.assign(k, 0.0);
    double tail = 0.0;
    for (std::size_t j = k; j-- > 0;) {
        tail += all[j];
        d.at_risk[j] = tail;
    }
    d.survival = km_survival(d.events, d.at_risk);
    d.pmf = km_pmf(d.survival);
    d.degenerate = std::all_of(d.events.begin(), d.events.end(), [](double e) { return e == 0.0; });
    return d;
}

/// Groups by peak and fits each group.
inline std::map<Volume, PeakDistribution> fit_all(std::span<const VolumeObservation> obs, bool include_censored = true) {
    std::map<Volume, std::vector<VolumeObservation>> groups;
    for (const auto& o : obs)
        if (include_censored || !o.censored) groups[o.peak].push_back(o);
    std::map<Volume, PeakDistribution> out;
    for (const auto& [p, g] : groups) out.emplace(p, fit(g));
    return out;
}

/// One unit-weight observation per iceberg with a precisely detected peak.
/// Ambiguous ones are counted in `skipped_ambiguous`.
inline std::vector<VolumeObservation> observations_from_native(std::span<const NativeIceberg> icebergs,
                                                               std::size_t* skipped_ambiguous = nullptr) {
    std::vector<VolumeObservation> out;
    std::size_t skipped = 0;
    for (const auto& ice : icebergs) {
        if (!ice.peak_precise()) {
            ++skipped;
            continue;
        }
        out.push_back({*ice.peak(), ice.total_volume, 1.0, ice.status == IcebergStatus::Cancelled});
    }
    if (skipped_ambiguous) *skipped_ambiguous = skipped;
    return out;
}

/// One observation per distinct chain length, each weighted 1/h.
inline std::vector<VolumeObservation> observations_from_trees(std::span<const TrancheTree> trees) {
    std::vector<VolumeObservation> out;
    for (const auto& t : trees) {
        const auto& cs = t.chains.empty() ? chains(t) : t.chains;
        std::map<std::size_t, Volume> reps;
        for (const auto& c : cs) reps.emplace(c.length, c.volume);
        const double w = 1.0 / static_cast<double>(reps.size());
        for (const auto& [len, vol] : reps)
            out.push_back({t.peak, vol, w, t.status == IcebergStatus::Cancelled});
    }
    return out;
}

}  // namespace ice
