#pragma once

// Versioned JSON model file:
//
//   {"version": "icedetect-km/1",
//    "config": {...provenance...},
//    "peaks": [{"kind": "native"|"synthetic", "p": 9, "support": [...],
//               "d": [...], "n": [...], "pmf": [...], "observations": 3}]}
//
// Survival values are recomputed from d and n on load.

#include "survival_model.hpp"

#include <json.hpp>

#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace ice {

inline constexpr const char* kModelVersion = "icedetect-km/1";

struct ModelConfig {
    double dt_seconds = 0.3;
    int min_tranches = 3;
    bool include_censored = true;
    std::string train_window;
    std::string source;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct SurvivalModel {
    ModelConfig config;
    std::map<Volume, PeakDistribution> native;
    std::map<Volume, PeakDistribution> synthetic;

    bool empty() const { return native.empty() && synthetic.empty(); }
    friend bool operator==(const SurvivalModel&, const SurvivalModel&) = default;
};

class ModelError : public std::runtime_error {
public:
    enum class Kind { SchemaVersionMismatch, Malformed };
    ModelError(Kind k, const std::string& msg) : std::runtime_error(msg), kind_(k) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

namespace detail {

inline nlohmann::json peak_to_json(const PeakDistribution& d, const char* kind) {
    return nlohmann::json{{"kind", kind},           {"p", d.peak},     {"support", d.support},
                          {"d", d.events},          {"n", d.at_risk},  {"pmf", d.pmf},
                          {"observations", d.observations}, {"degenerate", d.degenerate}};
}

inline PeakDistribution peak_from_json(const nlohmann::json& j) {
    PeakDistribution d;
    d.peak = j.at("p").get<Volume>();
    d.support = j.at("support").get<std::vector<Volume>>();
    d.events = j.at("d").get<std::vector<double>>();
    d.at_risk = j.at("n").get<std::vector<double>>();
    d.pmf = j.at("pmf").get<std::vector<double>>();
    d.observations = j.value("observations", std::size_t{0});
    const std::size_t k = d.support.size();
    if (d.events.size() != k || d.at_risk.size() != k || d.pmf.size() != k)
        throw ModelError(ModelError::Kind::Malformed, "peak " + std::to_string(d.peak) + ": column lengths differ");
    for (std::size_t j2 = 0; j2 < k; ++j2)
        if (!(d.at_risk[j2] > 0))
            throw ModelError(ModelError::Kind::Malformed, "peak " + std::to_string(d.peak) + ": non-positive n");
    d.survival = km_survival(d.events, d.at_risk);
    d.degenerate = j.value("degenerate", false);
    return d;
}

}  // namespace detail

inline void save_model(const SurvivalModel& m, std::ostream& out) {
    nlohmann::json j;
    j["version"] = kModelVersion;
    j["config"] = {{"dt", m.config.dt_seconds},
                   {"min_tranches", m.config.min_tranches},
                   {"include_censored", m.config.include_censored},
                   {"train_window", m.config.train_window},
                   {"source", m.config.source}};
    auto peaks = nlohmann::json::array();
    for (const auto& [p, d] : m.native) peaks.push_back(detail::peak_to_json(d, "native"));
    for (const auto& [p, d] : m.synthetic) peaks.push_back(detail::peak_to_json(d, "synthetic"));
    j["peaks"] = std::move(peaks);
    out << j.dump(1) << '\n';
}

inline SurvivalModel load_model(std::istream& in) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ModelError(ModelError::Kind::Malformed, std::string("model is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("version"))
        throw ModelError(ModelError::Kind::Malformed, "model has no version tag");
    if (!j["version"].is_string() || j["version"].get<std::string>() != kModelVersion)
        throw ModelError(ModelError::Kind::SchemaVersionMismatch,
                         "model version " + j["version"].dump() + ", expected " + kModelVersion);
    SurvivalModel m;
    try {
        const auto& c = j.at("config");
        m.config.dt_seconds = c.at("dt").get<double>();
        m.config.min_tranches = c.at("min_tranches").get<int>();
        m.config.include_censored = c.value("include_censored", true);
        m.config.train_window = c.value("train_window", std::string{});
        m.config.source = c.value("source", std::string{});
        for (const auto& pj : j.at("peaks")) {
            const auto kind = pj.at("kind").get<std::string>();
            auto d = detail::peak_from_json(pj);
            if (kind == "native")
                m.native.emplace(d.peak, std::move(d));
            else if (kind == "synthetic")
                m.synthetic.emplace(d.peak, std::move(d));
            else
                throw ModelError(ModelError::Kind::Malformed, "unknown peak kind '" + kind + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ModelError(ModelError::Kind::Malformed, std::string("model schema: ") + e.what());
    }
    return m;
}

/// Flat CSV view: one row per (kind, peak, support point).
inline void export_model_csv(const SurvivalModel& m, std::ostream& out) {
    out << "kind,peak,volume,d,n,survival,pmf\n";
    auto rows = [&](const std::map<Volume, PeakDistribution>& ds, const char* kind) {
        for (const auto& [p, d] : ds)
            for (std::size_t j = 0; j < d.support.size(); ++j) {
                std::ostringstream line;
                line.precision(17);
                line << kind << ',' << p << ',' << d.support[j] << ',' << d.events[j] << ',' << d.at_risk[j] << ','
                     << d.survival[j] << ',' << d.pmf[j] << '\n';
                out << line.str();
            }
    };
    rows(m.native, "native");
    rows(m.synthetic, "synthetic");
}

}  // namespace ice
