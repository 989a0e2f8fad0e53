#pragma once

// Order-log ingestion.
//
// Record layout, one per line:
//
//     time,order_id,side,action,price,volume,affected
//
// `time` is HH:MM:SS.mmm (1-3 fractional digits), optionally preceded by a
// `YYYY-MM-DD` column or written as `YYYY-MM-DD HH:MM:SS.mmm`. Side is B/S,
// action is LIMIT/MODIFY/DELETE/TRADE in any case, and `affected` is `-`
// unless the action is TRADE, where it names the passive order.

#include "core.hpp"

#include <cstddef>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ice {

struct OrderEvent {
    Timestamp time;
    OrderId order_id = 0;
    Side side = Side::Buy;
    Action action = Action::Limit;
    Price price;
    Volume volume = 0;
    std::optional<OrderId> affected;

    friend bool operator==(const OrderEvent&, const OrderEvent&) = default;
};

enum class ParseErrorKind {
    MissingField,
    MalformedTime,
    UnknownAction,
    NegativeVolume,
    NegativePrice,
    MalformedField,
};

inline std::string_view to_string(ParseErrorKind k) {
    switch (k) {
        case ParseErrorKind::MissingField: return "MissingField";
        case ParseErrorKind::MalformedTime: return "MalformedTime";
        case ParseErrorKind::UnknownAction: return "UnknownAction";
        case ParseErrorKind::NegativeVolume: return "NegativeVolume";
        case ParseErrorKind::NegativePrice: return "NegativePrice";
        case ParseErrorKind::MalformedField: return "MalformedField";
    }
    return "?";
}

struct ParseError {
    ParseErrorKind kind;
    std::string detail;
};

namespace detail {

inline bool iequals(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        char x = a[i], y = b[i];
        if (x >= 'a' && x <= 'z') x = static_cast<char>(x - 'a' + 'A');
        if (y >= 'a' && y <= 'z') y = static_cast<char>(y - 'a' + 'A');
        if (x != y) return false;
    }
    return true;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

/// Splits on commas into at most `N` fields; returns the field count, or
/// N+1 if there were more.
template <std::size_t N>
std::size_t split_fields(std::string_view line, std::string_view (&out)[N]) {
    std::size_t n = 0;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        if (n == N) return N + 1;
        out[n++] = trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return n;
}

inline bool is_unsigned_number(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s)
        if (c < '0' || c > '9') return false;
    return true;
}

}  // namespace detail

inline std::optional<Action> parse_action(std::string_view s) {
    using detail::iequals;
    if (iequals(s, "LIMIT")) return Action::Limit;
    if (iequals(s, "MODIFY")) return Action::Modify;
    if (iequals(s, "DELETE")) return Action::Delete;
    if (iequals(s, "TRADE")) return Action::Trade;
    return std::nullopt;
}

/// Decodes one data record. The date may come as its own leading column or
/// fused with the time field.
inline Expected<OrderEvent, ParseError> parse_record(std::string_view line) {
    std::string_view f[8];
    std::size_t n = detail::split_fields(line, f);
    if (n < 7) return ParseError{ParseErrorKind::MissingField, "expected 7 columns, got " + std::to_string(n)};
    if (n > 8) return ParseError{ParseErrorKind::MalformedField, "too many columns"};

    OrderEvent ev;
    std::size_t base = 0;
    std::optional<std::int64_t> day;
    if (n == 8) {
        day = parse_date(f[0]);
        if (!day) return ParseError{ParseErrorKind::MalformedTime, "bad date '" + std::string(f[0]) + "'"};
        base = 1;
    }

    std::string_view tf = f[base];
    if (tf.empty()) return ParseError{ParseErrorKind::MissingField, "time"};
    if (!day && tf.size() > 11 && (tf[10] == ' ' || tf[10] == 'T')) {
        day = parse_date(tf.substr(0, 10));
        if (!day) return ParseError{ParseErrorKind::MalformedTime, "bad date in '" + std::string(tf) + "'"};
        tf = tf.substr(11);
    }
    auto tod = parse_time_of_day(tf);
    if (!tod) return ParseError{ParseErrorKind::MalformedTime, "bad time '" + std::string(tf) + "'"};
    ev.time = day ? Timestamp{*day * Timestamp::kDayMs + *tod, true} : Timestamp{*tod, false};

    std::string_view idf = f[base + 1], sidef = f[base + 2], actf = f[base + 3], pricef = f[base + 4],
                     volf = f[base + 5], afff = f[base + 6];

    if (idf.empty()) return ParseError{ParseErrorKind::MissingField, "order_id"};
    if (!detail::parse_int(idf, ev.order_id))
        return ParseError{ParseErrorKind::MalformedField, "order_id '" + std::string(idf) + "'"};

    if (sidef.empty()) return ParseError{ParseErrorKind::MissingField, "side"};
    if (sidef == "B" || sidef == "b")
        ev.side = Side::Buy;
    else if (sidef == "S" || sidef == "s")
        ev.side = Side::Sell;
    else
        return ParseError{ParseErrorKind::MalformedField, "side '" + std::string(sidef) + "'"};

    if (actf.empty()) return ParseError{ParseErrorKind::MissingField, "action"};
    auto act = parse_action(actf);
    if (!act) return ParseError{ParseErrorKind::UnknownAction, "action '" + std::string(actf) + "'"};
    ev.action = *act;

    if (pricef.empty()) return ParseError{ParseErrorKind::MissingField, "price"};
    auto px = Price::parse(pricef);
    if (!px) return ParseError{ParseErrorKind::MalformedField, "price '" + std::string(pricef) + "'"};
    if (px->units() < 0) return ParseError{ParseErrorKind::NegativePrice, "price " + std::string(pricef)};
    ev.price = *px;

    if (volf.empty()) return ParseError{ParseErrorKind::MissingField, "volume"};
    if (volf.front() == '-' && volf.size() > 1)
        return ParseError{ParseErrorKind::NegativeVolume, "volume " + std::string(volf)};
    if (!detail::parse_int(volf, ev.volume))
        return ParseError{ParseErrorKind::MalformedField, "volume '" + std::string(volf) + "'"};

    if (afff.empty()) return ParseError{ParseErrorKind::MissingField, "affected"};
    if (afff == "-") {
        if (ev.action == Action::Trade) return ParseError{ParseErrorKind::MissingField, "trade without affected order"};
    } else {
        if (ev.action != Action::Trade)
            return ParseError{ParseErrorKind::MalformedField, "affected order on non-trade record"};
        OrderId a = 0;
        if (!detail::parse_int(afff, a))
            return ParseError{ParseErrorKind::MalformedField, "affected '" + std::string(afff) + "'"};
        ev.affected = a;
    }
    return ev;
}

/// Canonical form: upper-case action, shortest price, three-digit millis.
inline std::string serialize_record(const OrderEvent& ev) {
    std::string out;
    out.reserve(64);
    out += format_timestamp(ev.time);
    out += ',';
    out += std::to_string(ev.order_id);
    out += ',';
    out += side_code(ev.side);
    out += ',';
    out += action_name(ev.action);
    out += ',';
    out += ev.price.to_string();
    out += ',';
    out += std::to_string(ev.volume);
    out += ',';
    out += ev.affected ? std::to_string(*ev.affected) : std::string("-");
    return out;
}

inline constexpr std::string_view kLogHeader = "time,order_id,side,action,price,volume,affected";

/// A data line's second column is the numeric order id; anything else in the
/// first line marks it as a header.
inline bool looks_like_header(std::string_view line) {
    std::string_view f[8];
    std::size_t n = detail::split_fields(line, f);
    if (n < 2) return false;
    // A leading date column shifts the id to the third column.
    if (n == 8 && parse_date(f[0])) return !detail::is_unsigned_number(f[2]);
    return !detail::is_unsigned_number(f[1]);
}

enum class DiagnosticKind { Rejected, OrderingViolation };

struct IngestDiagnostic {
    DiagnosticKind kind;
    std::size_t line;
    std::string message;
};

class IoError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class FormatMismatch : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatOptions {
    /// Header handling: auto-detect by default.
    enum class Header { Auto, Present, Absent } header = Header::Auto;
    /// Diagnostics kept in memory; counting continues past the cap.
    std::size_t max_diagnostics = 1000;
};

/// Pull-based, single-consumer reader. Memory is bounded by one line plus the
/// capped diagnostic list.
class EventStream {
public:
    EventStream(std::unique_ptr<std::istream> owned, std::string description, FormatOptions opts = {})
        : owned_(std::move(owned)), in_(owned_.get()), description_(std::move(description)), opts_(opts) {
        probe();
    }

    EventStream(std::istream& in, std::string description, FormatOptions opts = {})
        : in_(&in), description_(std::move(description)), opts_(opts) {
        probe();
    }

    EventStream(const EventStream&) = delete;
    EventStream& operator=(const EventStream&) = delete;
    EventStream(EventStream&&) = default;
    EventStream& operator=(EventStream&&) = default;

    /// Next valid record in file order; rejected lines are skipped and logged.
    std::optional<OrderEvent> next() {
        while (true) {
            std::string_view line;
            if (pending_first_) {
                pending_first_ = false;
                line = first_line_;
            } else {
                if (!std::getline(*in_, buf_)) return std::nullopt;
                ++line_no_;
                line = buf_;
            }
            line = detail::trim(line);
            if (line.empty()) continue;
            auto rec = parse_record(line);
            if (!rec) {
                ++rejected_;
                note(DiagnosticKind::Rejected,
                     std::string(to_string(rec.error().kind)) + ": " + rec.error().detail);
                continue;
            }
            ++consumed_;
            if (have_last_ && rec->time < last_time_) {
                ++ordering_violations_;
                note(DiagnosticKind::OrderingViolation,
                     "time " + format_timestamp(rec->time) + " precedes " + format_timestamp(last_time_));
            }
            last_time_ = rec->time;
            have_last_ = true;
            return std::move(rec).value();
        }
    }

    const std::string& description() const { return description_; }
    std::size_t line() const { return line_no_; }
    std::size_t consumed() const { return consumed_; }
    std::size_t rejected() const { return rejected_; }
    std::size_t ordering_violations() const { return ordering_violations_; }
    bool had_header() const { return had_header_; }
    const std::vector<IngestDiagnostic>& diagnostics() const { return diags_; }

private:
    void probe() {
        if (!in_ || !*in_) throw IoError("cannot read " + description_);
        // Find the first non-empty line; decide header and format from it.
        while (std::getline(*in_, first_line_)) {
            ++line_no_;
            if (!detail::trim(first_line_).empty()) break;
        }
        auto first = detail::trim(first_line_);
        if (first.empty()) return;  // empty source
        bool header = opts_.header == FormatOptions::Header::Present ||
                      (opts_.header == FormatOptions::Header::Auto && looks_like_header(first));
        if (header) {
            std::string_view f[8];
            std::size_t n = detail::split_fields(first, f);
            if (n < 7 || n > 8)
                throw FormatMismatch(description_ + ": header has " + std::to_string(n) + " columns, expected 7");
            had_header_ = true;
            return;
        }
        std::string_view f[8];
        std::size_t n = detail::split_fields(first, f);
        if (n < 7 || n > 8)
            throw FormatMismatch(description_ + ": line " + std::to_string(line_no_) + " has " + std::to_string(n) +
                                 " comma-separated columns, expected 7");
        pending_first_ = true;
    }

    void note(DiagnosticKind kind, std::string msg) {
        if (diags_.size() < opts_.max_diagnostics) diags_.push_back({kind, line_no_, std::move(msg)});
    }

    std::unique_ptr<std::istream> owned_;
    std::istream* in_ = nullptr;
    std::string description_;
    FormatOptions opts_;
    std::string buf_;
    std::string first_line_;
    bool pending_first_ = false;
    bool had_header_ = false;
    std::size_t line_no_ = 0;
    std::size_t consumed_ = 0;
    std::size_t rejected_ = 0;
    std::size_t ordering_violations_ = 0;
    Timestamp last_time_{};
    bool have_last_ = false;
    std::vector<IngestDiagnostic> diags_;
};

inline EventStream open_stream(const std::string& path, FormatOptions opts = {}) {
    auto f = std::make_unique<std::ifstream>(path);
    if (!*f) throw IoError("cannot open " + path);
    return EventStream(std::move(f), path, opts);
}

}  // namespace ice
