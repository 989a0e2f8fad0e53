#pragma once

// Out-of-sample scoring. "Positive" means the iceberg is complete (no hidden
// volume left); cells follow that convention throughout.

#include "predict.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace ice {

enum class Cell { TruePositive, FalsePositive, TrueNegative, FalseNegative };

struct ConfusionMatrix {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    void add(Cell c) {
        switch (c) {
            case Cell::TruePositive: ++tp; break;
            case Cell::FalsePositive: ++fp; break;
            case Cell::TrueNegative: ++tn; break;
            case Cell::FalseNegative: ++fn; break;
        }
    }
    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        tp += o.tp;
        fp += o.fp;
        tn += o.tn;
        fn += o.fn;
        return *this;
    }
    std::size_t total() const { return tp + fp + tn + fn; }

    static std::optional<double> ratio(std::size_t num, std::size_t den) {
        if (den == 0) return std::nullopt;
        return static_cast<double>(num) / static_cast<double>(den);
    }
    std::optional<double> accuracy() const { return ratio(tp + tn, total()); }
    std::optional<double> precision() const { return ratio(tp, tp + fp); }
    std::optional<double> recall() const { return ratio(tp, tp + fn); }
    std::optional<double> f1() const {
        auto p = precision(), r = recall();
        if (!p || !r || *p + *r == 0.0) return std::nullopt;
        return 2.0 * *p * *r / (*p + *r);
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct RegressionReport {
    double sum_abs = 0.0;
    double sum_sq = 0.0;
    std::size_t count = 0;   // |R|
    double mean_total = 0.0; // mean true total volume of the evaluated icebergs

    void add(double residual) {
        sum_abs += std::abs(residual);
        sum_sq += residual * residual;
        ++count;
    }
    std::optional<double> mae() const {
        if (count == 0) return std::nullopt;
        return sum_abs / static_cast<double>(count);
    }
    std::optional<double> rmse() const {
        if (count == 0) return std::nullopt;
        return std::sqrt(sum_sq / static_cast<double>(count));
    }
    std::optional<double> mae_pct() const {
        auto m = mae();
        if (!m || mean_total <= 0) return std::nullopt;
        return 100.0 * *m / mean_total;
    }
    std::optional<double> rmse_pct() const {
        auto m = rmse();
        if (!m || mean_total <= 0) return std::nullopt;
        return 100.0 * *m / mean_total;
    }
};

struct PredictorResult {
    std::string name;
    ConfusionMatrix confusion;
    RegressionReport regression;
    std::size_t points = 0;
    std::size_t degenerate = 0;
    std::size_t unmodeled = 0;
};

/// Native cell rule at a new tranche: with `after` = accumulated + tranche
/// volume, truth is negative iff after < total, prediction negative iff
/// after < predicted.
inline Cell classify_native(Volume after, Volume true_total, Volume predicted) {
    const bool truth_pos = !(after < true_total);
    const bool pred_pos = !(after < predicted);
    if (pred_pos) return truth_pos ? Cell::TruePositive : Cell::FalsePositive;
    return truth_pos ? Cell::FalseNegative : Cell::TrueNegative;
}

/// How a set of k mode predictions votes.
enum class ModeVote {
    /// Correct if any of the k predictions classifies correctly.
    AnyCorrect,
    /// Positive if any of the k predictions is positive.
    AnyPositive,
};

inline Cell classify_native_modes(Volume after, Volume true_total, std::span<const Volume> predictions,
                                  ModeVote vote = ModeVote::AnyCorrect) {
    const bool truth_pos = !(after < true_total);
    bool any_pos = false, any_neg = false;
    for (Volume p : predictions) {
        if (after < p)
            any_neg = true;
        else
            any_pos = true;
    }
    if (vote == ModeVote::AnyPositive) {
        if (any_pos) return truth_pos ? Cell::TruePositive : Cell::FalsePositive;
        return truth_pos ? Cell::FalseNegative : Cell::TrueNegative;
    }
    if (truth_pos) return any_pos ? Cell::TruePositive : Cell::FalseNegative;
    return any_neg ? Cell::TrueNegative : Cell::FalsePositive;
}

/// Synthetic cell rule: at the last tranche an exact hit is TP (else FP);
/// earlier, a prediction strictly above the accumulated volume is TN (else FN).
inline Cell classify_synthetic(bool last_tranche, double predicted, double accumulated) {
    constexpr double eps = 1e-9;
    if (last_tranche) return std::abs(predicted - accumulated) <= eps ? Cell::TruePositive : Cell::FalsePositive;
    return predicted > accumulated + eps ? Cell::TrueNegative : Cell::FalseNegative;
}

struct NativeEvalConfig {
    std::size_t k = 3;
    ModeVote vote = ModeVote::AnyCorrect;
};

/// Scores mean, median and mode(1..k) after every tranche of each complete,
/// precisely-peaked iceberg. Icebergs whose peak has no usable distribution
/// are counted as unmodeled and left out of the cells.
inline std::vector<PredictorResult> eval_native(std::span<const NativeIceberg> icebergs,
                                                const std::map<Volume, PeakDistribution>& model,
                                                NativeEvalConfig cfg = {}) {
    std::vector<PredictorResult> res;
    res.push_back({"mean", {}, {}, 0, 0, 0});
    res.push_back({"median", {}, {}, 0, 0, 0});
    for (std::size_t j = 1; j <= cfg.k; ++j) res.push_back({"mode(" + std::to_string(j) + ")", {}, {}, 0, 0, 0});

    double total_sum = 0.0;
    std::size_t total_n = 0;
    for (const auto& ice : icebergs) {
        if (ice.status != IcebergStatus::Complete || !ice.peak_precise()) continue;
        const Volume v_true = ice.total_volume;
        auto it = model.find(*ice.peak());
        const bool modeled = it != model.end() && !it->second.degenerate;
        if (!modeled) {
            for (auto& r : res) r.unmodeled += ice.tranche_volumes.size();
            continue;
        }
        total_sum += static_cast<double>(v_true);
        ++total_n;
        for (std::size_t r = 0; r < ice.tranche_volumes.size(); ++r) {
            const Volume acc = ice.tranche_accumulated[r];
            const Volume after = acc + ice.tranche_volumes[r];
            const auto pred = predict_native(it->second, acc, cfg.k);
            const double vt = static_cast<double>(v_true);
            for (auto& rr : res) ++rr.points;
            if (pred.degenerate) {
                // Nothing left to predict: treated as predicted complete.
                for (auto& rr : res) {
                    ++rr.degenerate;
                    rr.confusion.add(classify_native(after, v_true, after));
                    rr.regression.add(vt - static_cast<double>(after));
                }
                continue;
            }
            res[0].confusion.add(classify_native(after, v_true, *pred.mean));
            res[0].regression.add(vt - static_cast<double>(*pred.mean));
            res[1].confusion.add(classify_native(after, v_true, *pred.median));
            res[1].regression.add(vt - static_cast<double>(*pred.median));
            for (std::size_t j = 1; j <= cfg.k; ++j) {
                const std::size_t n = std::min(j, pred.modes.size());
                std::span<const Volume> top(pred.modes.data(), n);
                auto& rr = res[1 + j];
                rr.confusion.add(classify_native_modes(after, v_true, top, cfg.vote));
                double best = std::numeric_limits<double>::infinity();
                double best_e = 0.0;
                for (Volume m : top) {
                    const double e = vt - static_cast<double>(m);
                    if (std::abs(e) < best) {
                        best = std::abs(e);
                        best_e = e;
                    }
                }
                rr.regression.add(best_e);
            }
        }
    }
    const double mean_total = total_n ? total_sum / static_cast<double>(total_n) : 0.0;
    for (auto& r : res) r.regression.mean_total = mean_total;
    return res;
}

/// Test tranches of a tree: chains of at least `min_chain` tranches are
/// walked root to sink in chain order, each tranche emitted on first visit,
/// and only where some chain has reached `min_prefix` tranches.
inline std::vector<std::size_t> eval_tranches(const TrancheTree& tree, std::size_t min_chain, std::size_t min_prefix) {
    std::vector<std::size_t> out;
    std::set<std::size_t> seen;
    for (const auto& c : tree.chains) {
        if (c.length < min_chain) continue;
        for (std::size_t node : c.nodes) {
            if (!seen.insert(node).second) continue;
            std::size_t deepest = 0;
            for (const auto& cp : chains_through(tree, node)) deepest = std::max(deepest, cp.length);
            if (deepest >= min_prefix) out.push_back(node);
        }
    }
    return out;
}

inline PredictorResult eval_synthetic(std::span<const TrancheTree> trees, const std::map<Volume, PeakDistribution>& model,
                                      Aggregation method, const DetectorConfig& cfg = {}) {
    PredictorResult res{"synthetic(" + std::string(to_string(method)) + ")", {}, {}, 0, 0, 0};
    double total_sum = 0.0;
    std::size_t total_n = 0;
    for (const auto& tree : trees) {
        if (tree.status != IcebergStatus::Complete) continue;
        const auto nodes = eval_tranches(tree, static_cast<std::size_t>(cfg.min_eval_chain),
                                         static_cast<std::size_t>(cfg.min_tranches));
        if (nodes.empty()) continue;
        auto it = model.find(tree.peak);
        if (it == model.end() || it->second.degenerate) {
            res.unmodeled += nodes.size();
            continue;
        }
        const double final_volume = aggregate_volume(tree, method);
        total_sum += final_volume;
        ++total_n;
        const std::size_t sink = tree.sink();
        for (std::size_t node : nodes) {
            const auto states = chain_states_at(tree, node);
            std::vector<std::pair<std::size_t, double>> acc;
            for (const auto& s : states) acc.emplace_back(s.length, static_cast<double>(s.accumulated));
            const double actual = aggregate(acc, method);
            const auto pred = predict_synthetic(it->second, states, method);
            ++res.points;
            if (pred.degenerate_chains == states.size()) ++res.degenerate;
            res.confusion.add(classify_synthetic(node == sink, pred.aggregated, actual));
            res.regression.add(pred.aggregated - final_volume);
        }
    }
    res.regression.mean_total = total_n ? total_sum / static_cast<double>(total_n) : 0.0;
    return res;
}

// ---------------------------------------------------------------------------
// Reporting

inline std::string format_fixed(double v, int decimals = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

inline std::string format_pct(std::optional<double> ratio) {
    return ratio ? format_fixed(100.0 * *ratio) + "%" : std::string("undefined");
}

/// `1.78 (22.55%)`
inline std::string format_value_pct(std::optional<double> value, std::optional<double> pct) {
    if (!value) return "undefined";
    std::string s = format_fixed(*value);
    if (pct) s += " (" + format_fixed(*pct) + "%)";
    return s;
}

inline std::string csv_num(std::optional<double> v, int decimals = 4) {
    return v ? format_fixed(*v, decimals) : std::string("NA");
}

inline void write_metrics_csv(std::span<const PredictorResult> results, std::ostream& out) {
    out << "predictor,accuracy,precision,recall,f1,mae,mae_pct,rmse,rmse_pct,points,degenerate,unmodeled\n";
    auto pct = [](std::optional<double> r) { return r ? std::optional<double>(100.0 * *r) : std::nullopt; };
    for (const auto& r : results) {
        const auto& c = r.confusion;
        out << r.name << ',' << csv_num(pct(c.accuracy())) << ',' << csv_num(pct(c.precision())) << ','
            << csv_num(pct(c.recall())) << ',' << csv_num(pct(c.f1())) << ',' << csv_num(r.regression.mae()) << ','
            << csv_num(r.regression.mae_pct()) << ',' << csv_num(r.regression.rmse()) << ','
            << csv_num(r.regression.rmse_pct()) << ',' << r.points << ',' << r.degenerate << ',' << r.unmodeled
            << '\n';
    }
}

inline void write_confusion_csv(std::span<const PredictorResult> results, std::ostream& out) {
    out << "predictor,tp,fp,tn,fn\n";
    for (const auto& r : results)
        out << r.name << ',' << r.confusion.tp << ',' << r.confusion.fp << ',' << r.confusion.tn << ','
            << r.confusion.fn << '\n';
}

namespace detail {

inline std::string pad(std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
}

inline std::string cell_with_share(std::size_t n, std::size_t total) {
    std::string s = std::to_string(n);
    s += " (" + (total ? format_fixed(100.0 * static_cast<double>(n) / static_cast<double>(total)) : std::string("0.00")) +
         "%)";
    return s;
}

}  // namespace detail

/// Metric table (one column per predictor) followed by a confusion matrix
/// per predictor, counts with share of total.
inline void write_text_report(const std::string& title, std::span<const PredictorResult> results, std::ostream& out) {
    using detail::pad;
    constexpr std::size_t w0 = 16, w = 20;
    out << title << '\n';
    out << pad("", w0);
    for (const auto& r : results) out << pad(r.name, w);
    out << '\n';
    auto row = [&](const char* label, auto getter) {
        out << pad(label, w0);
        for (const auto& r : results) out << pad(getter(r), w);
        out << '\n';
    };
    row("Accuracy", [](const PredictorResult& r) { return format_pct(r.confusion.accuracy()); });
    row("Precision", [](const PredictorResult& r) { return format_pct(r.confusion.precision()); });
    row("Recall", [](const PredictorResult& r) { return format_pct(r.confusion.recall()); });
    row("F1 score", [](const PredictorResult& r) { return format_pct(r.confusion.f1()); });
    row("MAE", [](const PredictorResult& r) { return format_value_pct(r.regression.mae(), r.regression.mae_pct()); });
    row("RMSE",
        [](const PredictorResult& r) { return format_value_pct(r.regression.rmse(), r.regression.rmse_pct()); });
    row("Points", [](const PredictorResult& r) { return std::to_string(r.points); });
    row("Degenerate", [](const PredictorResult& r) { return std::to_string(r.degenerate); });
    row("Unmodeled", [](const PredictorResult& r) { return std::to_string(r.unmodeled); });
    out << '\n';
    for (const auto& r : results) {
        const auto& c = r.confusion;
        const std::size_t n = c.total();
        out << "Confusion matrix: " << r.name << '\n';
        out << pad("", 22) << pad("Actual complete", w) << pad("Actual incomplete", w) << '\n';
        out << pad("Predicted complete", 22) << pad(detail::cell_with_share(c.tp, n), w)
            << pad(detail::cell_with_share(c.fp, n), w) << '\n';
        out << pad("Predicted incomplete", 22) << pad(detail::cell_with_share(c.fn, n), w)
            << pad(detail::cell_with_share(c.tn, n), w) << "\n\n";
    }
}

}  // namespace ice
