#pragma once

// One-pass detection over an event stream plus the tabular outputs built on
// it: detection CSVs, a JSON-lines detection stream, summaries and the
// distribution tables used for reporting.

#include "core.hpp"
#include "lob_ingest.hpp"
#include "model_io.hpp"
#include "native_detect.hpp"
#include "predict.hpp"
#include "survival_model.hpp"
#include "synthetic_detect.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace ice {

/// Counts taken from the raw stream while detecting.
struct FlowStats {
    std::array<std::size_t, 4> actions{};  // indexed by Action
    std::map<Volume, std::size_t> trade_volumes;
    Volume traded_volume = 0;
    std::size_t limits = 0;

    void add(const OrderEvent& ev) {
        ++actions[static_cast<std::size_t>(ev.action)];
        if (ev.action == Action::Trade) {
            ++trade_volumes[ev.volume];
            traded_volume += ev.volume;
        } else if (ev.action == Action::Limit) {
            ++limits;
        }
    }
    std::size_t count(Action a) const { return actions[static_cast<std::size_t>(a)]; }
};

struct Detection {
    std::vector<NativeIceberg> natives;
    std::vector<TrancheTree> trees;
    FlowStats flow;
    SyntheticCounters synthetic_counters;
    std::array<std::size_t, static_cast<std::size_t>(NativeDiagnostic::kCount)> native_diagnostics{};
    std::size_t events = 0;
};

/// Callbacks fire as soon as a detection is final, before end of stream
/// when possible.
struct DetectionSink {
    std::function<void(const NativeIceberg&)> native;
    std::function<void(const TrancheTree&)> tree;
};

template <class NextEvent>
Detection detect_events(NextEvent&& next, const DetectorConfig& cfg, const DetectionSink& sink = {},
                        bool keep = true) {
    cfg.validate();
    Detection out;
    NativeDetector nd;
    SyntheticDetector sd(cfg);
    std::vector<TrancheTree> fresh;
    auto emit_native = [&](NativeIceberg&& n) {
        if (sink.native) sink.native(n);
        if (keep) out.natives.push_back(std::move(n));
    };
    auto emit_trees = [&] {
        for (auto& t : fresh) {
            if (sink.tree) sink.tree(t);
            if (keep) out.trees.push_back(std::move(t));
        }
        fresh.clear();
    };
    while (auto ev = next()) {
        ++out.events;
        out.flow.add(*ev);
        if (auto n = nd.apply(*ev)) emit_native(std::move(*n));
        sd.process(*ev, fresh);
        emit_trees();
    }
    for (auto& n : nd.finalize_all()) emit_native(std::move(n));
    fresh = sd.finish();
    emit_trees();
    std::sort(out.natives.begin(), out.natives.end(),
              [](const NativeIceberg& a, const NativeIceberg& b) { return a.order_id < b.order_id; });
    std::sort(out.trees.begin(), out.trees.end(),
              [](const TrancheTree& a, const TrancheTree& b) { return a.id < b.id; });
    out.synthetic_counters = sd.counters();
    for (std::size_t i = 0; i < out.native_diagnostics.size(); ++i)
        out.native_diagnostics[i] = nd.diagnostic_count(static_cast<NativeDiagnostic>(i));
    return out;
}

inline Detection detect(EventStream& stream, const DetectorConfig& cfg, const DetectionSink& sink = {},
                        bool keep = true) {
    return detect_events([&] { return stream.next(); }, cfg, sink, keep);
}

inline Detection detect(std::span<const OrderEvent> events, const DetectorConfig& cfg) {
    std::size_t i = 0;
    return detect_events(
        [&]() -> std::optional<OrderEvent> {
            if (i == events.size()) return std::nullopt;
            return events[i++];
        },
        cfg);
}

// ---------------------------------------------------------------------------
// Summary

struct KindSummary {
    std::size_t complete = 0;
    std::size_t cancelled = 0;
    double volume = 0;  // iceberg volume
    double hidden_share = 0;
};

struct DetectionSummary {
    KindSummary native;
    /// Synthetic volume per aggregation method (all, unique, longest).
    std::array<KindSummary, 3> synthetic;
    Volume traded_volume = 0;
    std::size_t events = 0;
};

inline DetectionSummary summarize(const Detection& d) {
    DetectionSummary s;
    s.events = d.events;
    s.traded_volume = d.flow.traded_volume;
    const double traded = static_cast<double>(d.flow.traded_volume);
    for (const auto& n : d.natives) {
        (n.status == IcebergStatus::Complete ? s.native.complete : s.native.cancelled)++;
        s.native.volume += static_cast<double>(n.total_volume);
    }
    s.native.hidden_share = traded > 0 ? s.native.volume / traded : 0.0;
    for (int m = 0; m < 3; ++m) {
        auto& k = s.synthetic[static_cast<std::size_t>(m)];
        for (const auto& t : d.trees) {
            (t.status == IcebergStatus::Complete ? k.complete : k.cancelled)++;
            k.volume += aggregate_volume(t, static_cast<Aggregation>(m));
        }
        k.hidden_share = traded > 0 ? k.volume / traded : 0.0;
    }
    return s;
}

inline void write_summary(const DetectionSummary& s, std::ostream& out) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "events %zu, traded volume %llu\n", s.events,
                  static_cast<unsigned long long>(s.traded_volume));
    out << buf;
    std::snprintf(buf, sizeof buf, "native: %zu complete, %zu cancelled, volume %.0f, share of traded %.2f%%\n",
                  s.native.complete, s.native.cancelled, s.native.volume, 100.0 * s.native.hidden_share);
    out << buf;
    const auto& a = s.synthetic[0];
    std::snprintf(buf, sizeof buf, "synthetic: %zu complete, %zu cancelled\n", a.complete, a.cancelled);
    out << buf;
    for (int m = 0; m < 3; ++m) {
        const auto& k = s.synthetic[static_cast<std::size_t>(m)];
        std::snprintf(buf, sizeof buf, "  %-7s volume %.2f, share of traded %.2f%%\n",
                      std::string(to_string(static_cast<Aggregation>(m))).c_str(), k.volume, 100.0 * k.hidden_share);
        out << buf;
    }
}

// ---------------------------------------------------------------------------
// CSV outputs

namespace detail {

inline std::string join(const std::vector<Volume>& v, char sep = ';') {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += sep;
        s += std::to_string(v[i]);
    }
    return s;
}

inline std::string fmt2(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

}  // namespace detail

inline void write_native_csv(std::span<const NativeIceberg> icebergs, std::ostream& out) {
    out << "order_id,side,price,peak,peak_candidates,total_volume,n_tranches,tranche_volumes,status,first_time,"
           "last_time\n";
    for (const auto& n : icebergs) {
        out << n.order_id << ',' << side_code(n.side) << ',' << n.price.to_string() << ',';
        if (n.peak_precise())
            out << *n.peak();
        else
            out << "NA";
        out << ',' << detail::join(n.peak_candidates) << ',' << n.total_volume << ',' << n.tranche_volumes.size()
            << ',' << detail::join(n.tranche_volumes) << ',' << to_string(n.status) << ','
            << format_timestamp(n.first_time) << ',' << format_timestamp(n.last_time) << '\n';
    }
}

inline void write_synthetic_csv(std::span<const TrancheTree> trees, std::ostream& out) {
    out << "tree_id,side,price,peak,status,n_nodes,n_chains,len_min,len_max,vol_all,vol_unique,vol_longest,"
           "first_time,last_time\n";
    for (const auto& t : trees) {
        out << t.id << ',' << side_code(t.side) << ',' << t.price.to_string() << ',' << t.peak << ','
            << to_string(t.status) << ',' << t.nodes.size() << ',' << t.chains.size() << ','
            << t.min_chain_length() << ',' << t.max_chain_length() << ','
            << detail::fmt2(aggregate_volume(t, Aggregation::All)) << ','
            << detail::fmt2(aggregate_volume(t, Aggregation::Unique)) << ','
            << detail::fmt2(aggregate_volume(t, Aggregation::Longest)) << ',' << format_timestamp(t.first_time())
            << ',' << format_timestamp(t.last_time()) << '\n';
    }
}

/// Edge gaps run from parent placement to child placement.
inline void write_edges_csv(std::span<const TrancheTree> trees, std::ostream& out) {
    out << "tree_id,parent_order_id,child_order_id,gap_ms\n";
    for (const auto& t : trees)
        for (const auto& n : t.nodes)
            if (n.child) {
                const auto& c = t.nodes[*n.child];
                out << t.id << ',' << n.order_id << ',' << c.order_id << ',' << (c.placed.ms - n.placed.ms) << '\n';
            }
}

// ---------------------------------------------------------------------------
// JSON-lines detection stream

inline nlohmann::json to_json(const NativeIceberg& n) {
    std::vector<std::int64_t> times;
    for (const auto& t : n.tranche_times) times.push_back(t.ms);
    return {{"kind", "native"},
            {"order_id", n.order_id},
            {"side", std::string(1, side_code(n.side))},
            {"price", n.price.to_string()},
            {"peak_candidates", n.peak_candidates},
            {"peak_indeterminate", n.peak_indeterminate},
            {"tranche_volumes", n.tranche_volumes},
            {"tranche_accumulated", n.tranche_accumulated},
            {"tranche_times", times},
            {"traded", n.traded_volume},
            {"deleted", n.deleted_volume},
            {"total", n.total_volume},
            {"status", to_string(n.status)},
            {"first_time", n.first_time.ms},
            {"last_time", n.last_time.ms},
            {"dated", n.first_time.dated}};
}

inline nlohmann::json to_json(const TrancheTree& t) {
    auto nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
        nlohmann::json j{{"order_id", n.order_id}, {"volume", n.volume}, {"placed", n.placed.ms}};
        j["deleted"] = n.deleted ? nlohmann::json(n.deleted->ms) : nlohmann::json(nullptr);
        j["child"] = n.child ? nlohmann::json(*n.child) : nlohmann::json(nullptr);
        nodes.push_back(std::move(j));
    }
    return {{"kind", "synthetic"},
            {"tree_id", t.id},
            {"side", std::string(1, side_code(t.side))},
            {"price", t.price.to_string()},
            {"peak", t.peak},
            {"status", to_string(t.status)},
            {"dated", !t.nodes.empty() && t.nodes.front().placed.dated},
            {"nodes", std::move(nodes)}};
}

class DetectionFormatError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline Side side_from(const nlohmann::json& j) {
    const auto s = j.get<std::string>();
    if (s == "B") return Side::Buy;
    if (s == "S") return Side::Sell;
    throw DetectionFormatError("bad side '" + s + "'");
}

inline Price price_from(const nlohmann::json& j) {
    auto p = Price::parse(j.get<std::string>());
    if (!p) throw DetectionFormatError("bad price");
    return *p;
}

inline IcebergStatus status_from(const nlohmann::json& j) {
    const auto s = j.get<std::string>();
    if (s == "complete") return IcebergStatus::Complete;
    if (s == "cancelled") return IcebergStatus::Cancelled;
    throw DetectionFormatError("bad status '" + s + "'");
}

}  // namespace detail

inline NativeIceberg native_from_json(const nlohmann::json& j) {
    NativeIceberg n;
    const bool dated = j.value("dated", false);
    n.order_id = j.at("order_id").get<OrderId>();
    n.side = detail::side_from(j.at("side"));
    n.price = detail::price_from(j.at("price"));
    n.peak_candidates = j.at("peak_candidates").get<std::vector<Volume>>();
    n.peak_indeterminate = j.at("peak_indeterminate").get<bool>();
    n.tranche_volumes = j.at("tranche_volumes").get<std::vector<Volume>>();
    n.tranche_accumulated = j.at("tranche_accumulated").get<std::vector<Volume>>();
    for (auto ms : j.at("tranche_times").get<std::vector<std::int64_t>>()) n.tranche_times.push_back({ms, dated});
    n.traded_volume = j.at("traded").get<Volume>();
    n.deleted_volume = j.at("deleted").get<Volume>();
    n.total_volume = j.at("total").get<Volume>();
    n.status = detail::status_from(j.at("status"));
    n.first_time = {j.at("first_time").get<std::int64_t>(), dated};
    n.last_time = {j.at("last_time").get<std::int64_t>(), dated};
    return n;
}

inline TrancheTree tree_from_json(const nlohmann::json& j) {
    TrancheTree t;
    const bool dated = j.value("dated", false);
    t.id = j.at("tree_id").get<std::uint64_t>();
    t.side = detail::side_from(j.at("side"));
    t.price = detail::price_from(j.at("price"));
    t.peak = j.at("peak").get<Volume>();
    t.status = detail::status_from(j.at("status"));
    for (const auto& nj : j.at("nodes")) {
        TrancheNode n;
        n.order_id = nj.at("order_id").get<OrderId>();
        n.volume = nj.at("volume").get<Volume>();
        n.price = t.price;
        n.side = t.side;
        n.placed = {nj.at("placed").get<std::int64_t>(), dated};
        if (!nj.at("deleted").is_null()) n.deleted = Timestamp{nj.at("deleted").get<std::int64_t>(), dated};
        if (!nj.at("child").is_null()) n.child = nj.at("child").get<std::size_t>();
        t.nodes.push_back(std::move(n));
    }
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
        if (!t.nodes[i].child) continue;
        const std::size_t c = *t.nodes[i].child;
        if (c >= t.nodes.size() || c == i) throw DetectionFormatError("tree " + std::to_string(t.id) + ": bad child");
        t.nodes[c].parents.push_back(i);
    }
    t.chains = chains(t);
    return t;
}

/// Reads a JSON-lines detection stream; blank lines are skipped.
inline void read_detections(std::istream& in, std::vector<NativeIceberg>& natives, std::vector<TrancheTree>& trees) {
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const auto kind = j.at("kind").get<std::string>();
            if (kind == "native")
                natives.push_back(native_from_json(j));
            else if (kind == "synthetic")
                trees.push_back(tree_from_json(j));
            else
                throw DetectionFormatError("unknown kind '" + kind + "'");
        } catch (const nlohmann::json::exception& e) {
            throw DetectionFormatError("detection line " + std::to_string(no) + ": " + e.what());
        } catch (const DetectionFormatError& e) {
            throw DetectionFormatError("detection line " + std::to_string(no) + ": " + e.what());
        }
    }
}

// ---------------------------------------------------------------------------
// Training

inline SurvivalModel train_model(std::span<const NativeIceberg> natives, std::span<const TrancheTree> trees,
                                 ModelConfig cfg, std::size_t* skipped_ambiguous = nullptr) {
    SurvivalModel m;
    auto n_obs = observations_from_native(natives, skipped_ambiguous);
    auto s_obs = observations_from_trees(trees);
    m.native = fit_all(n_obs, cfg.include_censored);
    m.synthetic = fit_all(s_obs, cfg.include_censored);
    m.config = std::move(cfg);
    return m;
}

// ---------------------------------------------------------------------------
// Predictions along each detected native iceberg

inline void write_native_predictions_csv(std::span<const NativeIceberg> icebergs,
                                         const std::map<Volume, PeakDistribution>& model, std::size_t k,
                                         std::ostream& out) {
    out << "iceberg_id,tranche_r,peak,accumulated,mean,median";
    for (std::size_t i = 1; i <= k; ++i) out << ",mode" << i;
    out << ",space_size,degenerate\n";
    for (const auto& n : icebergs) {
        const auto peak = n.peak();
        if (!n.peak_precise()) continue;
        auto it = model.find(*peak);
        for (std::size_t r = 0; r < n.tranche_accumulated.size(); ++r) {
            const Volume acc = n.tranche_accumulated[r];
            Prediction p;
            if (it == model.end())
                p.degenerate = true;
            else
                p = predict_native(it->second, acc, k);
            auto opt = [](const std::optional<Volume>& v) { return v ? std::to_string(*v) : std::string("NA"); };
            out << n.order_id << ',' << r + 1 << ',' << *peak << ',' << acc << ',' << opt(p.mean) << ','
                << opt(p.median);
            for (std::size_t i = 0; i < k; ++i) out << ',' << (i < p.modes.size() ? std::to_string(p.modes[i]) : "NA");
            out << ',' << p.space_size << ',' << (p.degenerate ? 1 : 0) << '\n';
        }
    }
}

inline void write_synthetic_predictions_csv(std::span<const TrancheTree> trees,
                                            const std::map<Volume, PeakDistribution>& model, Aggregation method,
                                            std::ostream& out) {
    out << "tree_id,order_id,peak,chains,prediction,degenerate_chains\n";
    for (const auto& t : trees) {
        auto it = model.find(t.peak);
        for (std::size_t i = 0; i < t.nodes.size(); ++i) {
            out << t.id << ',' << t.nodes[i].order_id << ',' << t.peak << ',';
            if (it == model.end()) {
                out << chains_through(t, i).size() << ",NA,NA\n";
                continue;
            }
            const auto p = predict_synthetic(it->second, t, i, method);
            out << p.per_chain.size() << ',' << detail::fmt2(p.aggregated) << ',' << p.degenerate_chains << '\n';
        }
    }
}

// ---------------------------------------------------------------------------
// Distribution tables

/// Histogram with a fixed bin width; keys are bin lower edges.
struct Histogram {
    std::int64_t width = 1;
    std::map<std::int64_t, std::size_t> bins;
    std::size_t total = 0;
    std::size_t zeros = 0;

    void add(std::int64_t x) {
        const std::int64_t b = (x >= 0 ? x / width : -((-x + width - 1) / width)) * width;
        ++bins[b];
        ++total;
        if (x == 0) ++zeros;
    }
    double zero_share() const { return total ? static_cast<double>(zeros) / static_cast<double>(total) : 0.0; }
};

struct DistributionTables {
    FlowStats flow;
    DetectionSummary summary;
    std::map<Volume, std::size_t> native_peaks, synthetic_peaks;
    std::map<std::size_t, std::size_t> native_tranches, synthetic_tranches;
    Histogram native_gaps{10, {}, 0, 0};     // between successive tranche appearances, ms
    Histogram synthetic_gaps{10, {}, 0, 0};  // refill delay, delete to next limit, ms
};

inline DistributionTables tabulate(const Detection& d) {
    DistributionTables t;
    t.flow = d.flow;
    t.summary = summarize(d);
    for (const auto& n : d.natives) {
        if (n.peak_precise()) ++t.native_peaks[*n.peak()];
        ++t.native_tranches[n.tranche_volumes.size()];
        for (std::size_t i = 1; i < n.tranche_times.size(); ++i)
            t.native_gaps.add(n.tranche_times[i].ms - n.tranche_times[i - 1].ms);
    }
    for (const auto& tr : d.trees) {
        ++t.synthetic_peaks[tr.peak];
        ++t.synthetic_tranches[tr.max_chain_length()];
        for (const auto& n : tr.nodes)
            if (n.child && n.deleted) t.synthetic_gaps.add(tr.nodes[*n.child].placed.ms - n.deleted->ms);
    }
    return t;
}

/// Writes one CSV per table; `open(name)` returns the stream for a file.
template <class Open>
void write_tables(const DistributionTables& t, Open&& open) {
    {
        auto& o = open("actions.csv");
        o << "action,count\n";
        for (auto a : {Action::Limit, Action::Modify, Action::Delete, Action::Trade})
            o << action_name(a) << ',' << t.flow.count(a) << '\n';
    }
    {
        auto& o = open("trade_volume.csv");
        o << "volume,count\n";
        for (const auto& [v, c] : t.flow.trade_volumes) o << v << ',' << c << '\n';
    }
    {
        auto& o = open("completion.csv");
        o << "kind,status,count\n";
        o << "native,complete," << t.summary.native.complete << '\n';
        o << "native,cancelled," << t.summary.native.cancelled << '\n';
        o << "synthetic,complete," << t.summary.synthetic[0].complete << '\n';
        o << "synthetic,cancelled," << t.summary.synthetic[0].cancelled << '\n';
    }
    {
        auto& o = open("proportions.csv");
        o << "kind,icebergs,limit_orders,count_pct,iceberg_volume,traded_volume,volume_pct\n";
        const double limits = static_cast<double>(t.flow.limits);
        auto row = [&](const std::string& kind, std::size_t n, double vol) {
            o << kind << ',' << n << ',' << t.flow.limits << ','
              << detail::fmt2(limits > 0 ? 100.0 * static_cast<double>(n) / limits : 0.0) << ','
              << detail::fmt2(vol) << ',' << t.flow.traded_volume << ','
              << detail::fmt2(t.flow.traded_volume ? 100.0 * vol / static_cast<double>(t.flow.traded_volume) : 0.0)
              << '\n';
        };
        const auto& s = t.summary;
        row("native", s.native.complete + s.native.cancelled, s.native.volume);
        for (int m = 0; m < 3; ++m) {
            const auto& k = s.synthetic[static_cast<std::size_t>(m)];
            row("synthetic_" + std::string(to_string(static_cast<Aggregation>(m))), k.complete + k.cancelled,
                k.volume);
        }
    }
    {
        auto& o = open("peaks.csv");
        o << "kind,peak,count\n";
        for (const auto& [p, c] : t.native_peaks) o << "native," << p << ',' << c << '\n';
        for (const auto& [p, c] : t.synthetic_peaks) o << "synthetic," << p << ',' << c << '\n';
    }
    {
        auto& o = open("tranches.csv");
        o << "kind,n_tranches,count\n";
        for (const auto& [n, c] : t.native_tranches) o << "native," << n << ',' << c << '\n';
        for (const auto& [n, c] : t.synthetic_tranches) o << "synthetic," << n << ',' << c << '\n';
    }
    {
        auto& o = open("arrival_gaps.csv");
        o << "kind,gap_from_s,gap_to_s,count\n";
        auto rows = [&](const Histogram& h, const char* kind) {
            for (const auto& [b, c] : h.bins) {
                char buf[96];
                std::snprintf(buf, sizeof buf, "%s,%.2f,%.2f,%zu\n", kind, static_cast<double>(b) / 1000.0,
                              static_cast<double>(b + h.width) / 1000.0, c);
                o << buf;
            }
        };
        rows(t.native_gaps, "native");
        rows(t.synthetic_gaps, "synthetic");
    }
    {
        auto& o = open("zero_gaps.csv");
        o << "kind,gaps,zero_gaps,zero_pct\n";
        o << "native," << t.native_gaps.total << ',' << t.native_gaps.zeros << ','
          << detail::fmt2(100.0 * t.native_gaps.zero_share()) << '\n';
        o << "synthetic," << t.synthetic_gaps.total << ',' << t.synthetic_gaps.zeros << ','
          << detail::fmt2(100.0 * t.synthetic_gaps.zero_share()) << '\n';
    }
}

}  // namespace ice
