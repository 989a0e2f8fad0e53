#pragma once

// Total-size predictions for live icebergs from a fitted distribution.
//
// Native: the candidate space holds support volumes strictly above the volume
// accumulated before the current tranche. Synthetic: per chain, support
// volumes at or above the volume accumulated including the current tranche.
// Support points with zero mass (censored-only tails) are not candidates.

#include "survival_model.hpp"
#include "synthetic_detect.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace ice {

struct Prediction {
    std::optional<double> expectation;  // unrounded conditional mean
    std::optional<Volume> mean;
    std::optional<Volume> median;
    std::vector<Volume> modes;  // descending mass, ties ascending volume
    std::size_t space_size = 0;
    bool degenerate = false;
};

struct SpacePoint {
    Volume volume;
    double mass;
};

/// Support points with positive mass and volume > `accumulated` (strict) or
/// >= (inclusive). Ascending by volume.
inline std::vector<SpacePoint> constrained_space(const PeakDistribution& dist, Volume accumulated, bool inclusive) {
    std::vector<SpacePoint> out;
    for (std::size_t j = 0; j < dist.support.size(); ++j) {
        const Volume u = dist.support[j];
        const bool admitted = inclusive ? u >= accumulated : u > accumulated;
        if (admitted && dist.pmf[j] > 0.0) out.push_back({u, dist.pmf[j]});
    }
    return out;
}

/// Masses equal to 12 decimals count as tied. The estimator's products
/// leave last-bit noise on masses that are equal in exact arithmetic.
inline std::int64_t mass_key(double mass) { return std::llround(mass * 1e12); }

/// Orders by descending mass, ties by ascending volume.
inline std::vector<SpacePoint> mode_order(std::vector<SpacePoint> space) {
    std::stable_sort(space.begin(), space.end(), [](const SpacePoint& a, const SpacePoint& b) {
        const auto ka = mass_key(a.mass), kb = mass_key(b.mass);
        if (ka != kb) return ka > kb;
        return a.volume < b.volume;
    });
    return space;
}

inline Prediction predict_native(const PeakDistribution& dist, Volume accumulated, std::size_t k = 3) {
    Prediction p;
    if (dist.degenerate) {
        p.degenerate = true;
        return p;
    }
    const auto space = constrained_space(dist, accumulated, false);
    p.space_size = space.size();
    if (space.empty()) {
        p.degenerate = true;
        return p;
    }

    double mass = 0.0, weighted = 0.0;
    for (const auto& s : space) {
        mass += s.mass;
        weighted += static_cast<double>(s.volume) * s.mass;
    }
    // std::round is half-away-from-zero.
    p.expectation = weighted / mass;
    p.mean = static_cast<Volume>(std::round(*p.expectation));

    // Largest volume whose renormalized prefix mass stays within one half;
    // the smallest candidate when even the first point exceeds it.
    double prefix = 0.0;
    Volume median = space.front().volume;
    for (const auto& s : space) {
        prefix += s.mass / mass;
        if (prefix <= 0.5 + 1e-12)
            median = s.volume;
        else
            break;
    }
    p.median = median;

    const auto ordered = mode_order(space);
    for (std::size_t i = 0; i < std::min(k, ordered.size()); ++i) p.modes.push_back(ordered[i].volume);
    return p;
}

/// Argmax over the inclusive space; nullopt when it is empty.
inline std::optional<Volume> predict_chain_mode(const PeakDistribution& dist, Volume accumulated) {
    if (dist.degenerate) return std::nullopt;
    const auto space = constrained_space(dist, accumulated, true);
    if (space.empty()) return std::nullopt;
    return mode_order(space).front().volume;
}

struct SyntheticPrediction {
    double aggregated = 0.0;
    /// Per-chain predictions aligned with the input prefixes.
    std::vector<Volume> per_chain;
    std::size_t degenerate_chains = 0;
};

/// Chain state at the evaluated tranche: tranches so far and their volume.
struct ChainState {
    std::size_t length = 0;
    Volume accumulated = 0;
};

/// Per-chain mode, then aggregated across chains. A chain with no candidate
/// predicts its own accumulated volume (complete).
inline SyntheticPrediction predict_synthetic(const PeakDistribution& dist, const std::vector<ChainState>& chains_now,
                                             Aggregation method) {
    SyntheticPrediction out;
    std::vector<std::pair<std::size_t, double>> items;
    for (const auto& c : chains_now) {
        auto m = predict_chain_mode(dist, c.accumulated);
        if (!m) ++out.degenerate_chains;
        const Volume v = m.value_or(c.accumulated);
        out.per_chain.push_back(v);
        items.emplace_back(c.length, static_cast<double>(v));
    }
    out.aggregated = aggregate(items, method);
    return out;
}

/// State of every chain through `node` of a finalized tree.
inline std::vector<ChainState> chain_states_at(const TrancheTree& tree, std::size_t node) {
    std::vector<ChainState> out;
    for (const auto& cp : chains_through(tree, node)) out.push_back({cp.length, cp.length * tree.peak});
    return out;
}

inline SyntheticPrediction predict_synthetic(const PeakDistribution& dist, const TrancheTree& tree, std::size_t node,
                                             Aggregation method) {
    return predict_synthetic(dist, chain_states_at(tree, node), method);
}

}  // namespace ice
