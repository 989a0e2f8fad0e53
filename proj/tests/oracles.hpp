#pragma once

// Independent reference computations for the estimator and predictors.

#include <icedetect/survival_model.hpp>

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace oracles {

using Rational = boost::multiprecision::cpp_rational;

struct Km {
    std::vector<ice::Volume> support;
    std::vector<Rational> survival;
    std::vector<Rational> pmf;
};

/// Textbook product-limit estimate in exact arithmetic, straight from the raw
/// observation list: at each distinct volume, deaths over those still at risk.
/// Unit weights only.
inline Km kaplan_meier(const std::vector<ice::VolumeObservation>& obs) {
    Km k;
    for (const auto& o : obs)
        if (std::find(k.support.begin(), k.support.end(), o.volume) == k.support.end()) k.support.push_back(o.volume);
    std::sort(k.support.begin(), k.support.end());
    Rational s = 1;
    for (ice::Volume u : k.support) {
        Rational deaths = 0, at_risk = 0;
        for (const auto& o : obs) {
            if (o.volume >= u) at_risk += 1;
            if (o.volume == u && !o.censored) deaths += 1;
        }
        s *= 1 - deaths / at_risk;
        k.survival.push_back(s);
    }
    Rational prev = 1, total = 0;
    for (const auto& sv : k.survival) {
        k.pmf.push_back(prev - sv);
        total += prev - sv;
        prev = sv;
    }
    if (total > 0)
        for (auto& f : k.pmf) f /= total;
    return k;
}

inline bool rel_close(double got, const Rational& want, double tol) {
    const double w = static_cast<double>(want);
    if (w == 0.0) return std::abs(got) <= tol;
    return std::abs(got - w) <= tol * std::abs(w);
}

/// Up to 20 unit-weight observations for one peak, about a third censored.
inline std::vector<ice::VolumeObservation> random_sample(std::mt19937& rng, ice::Volume peak = 5) {
    const int n = static_cast<int>(rng() % 20) + 1;
    std::vector<ice::VolumeObservation> obs;
    for (int i = 0; i < n; ++i) obs.push_back({peak, peak * (rng() % 12 + 1), 1.0, rng() % 3 == 0});
    return obs;
}

/// E[V | V > v] by direct summation over positive-mass support points;
/// nullopt when none lie above v.
inline std::optional<double> conditional_mean(const ice::PeakDistribution& d, ice::Volume v, std::size_t* size = nullptr) {
    long double num = 0, den = 0;
    std::size_t n = 0;
    for (std::size_t j = 0; j < d.support.size(); ++j)
        if (d.support[j] > v && d.pmf[j] > 0) {
            num += static_cast<long double>(d.support[j]) * d.pmf[j];
            den += d.pmf[j];
            ++n;
        }
    if (size) *size = n;
    if (n == 0) return std::nullopt;
    return static_cast<double>(num / den);
}

}  // namespace oracles
