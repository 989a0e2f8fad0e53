#pragma once

// Shared vocabulary for the order-log pipeline: identifiers, fixed-point
// prices, millisecond timestamps and a small expected-like result type.

#include <charconv>
#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

namespace ice {

using OrderId = std::uint64_t;
using Volume = std::uint64_t;

enum class Side : std::uint8_t { Buy, Sell };
enum class Action : std::uint8_t { Limit, Modify, Delete, Trade };

inline constexpr char side_code(Side s) { return s == Side::Buy ? 'B' : 'S'; }

inline constexpr std::string_view action_name(Action a) {
    switch (a) {
        case Action::Limit: return "LIMIT";
        case Action::Modify: return "MODIFY";
        case Action::Delete: return "DELETE";
        case Action::Trade: return "TRADE";
    }
    return "?";
}

/// Fixed-point price, six decimal places. Comparisons are exact, which the
/// synthetic detector relies on when keying refills by price level.
class Price {
public:
    static constexpr std::int64_t kScale = 1'000'000;

    constexpr Price() = default;
    static constexpr Price from_units(std::int64_t units) { return Price(units); }
    static Price from_double(double v) { return Price(static_cast<std::int64_t>(v * kScale + (v >= 0 ? 0.5 : -0.5))); }

    constexpr std::int64_t units() const { return units_; }
    double to_double() const { return static_cast<double>(units_) / kScale; }

    /// Parses `123`, `123.`, `123.45`; at most six fractional digits.
    static std::optional<Price> parse(std::string_view s) {
        if (s.empty()) return std::nullopt;
        bool neg = false;
        if (s.front() == '-') {
            neg = true;
            s.remove_prefix(1);
        }
        auto dot = s.find('.');
        std::string_view ip = s.substr(0, dot);
        std::string_view fp = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
        if (ip.empty() || fp.size() > 6) return std::nullopt;
        std::int64_t whole = 0;
        auto [p, ec] = std::from_chars(ip.data(), ip.data() + ip.size(), whole);
        if (ec != std::errc{} || p != ip.data() + ip.size()) return std::nullopt;
        std::int64_t frac = 0;
        for (char c : fp) {
            if (c < '0' || c > '9') return std::nullopt;
            frac = frac * 10 + (c - '0');
        }
        for (std::size_t i = fp.size(); i < 6; ++i) frac *= 10;
        std::int64_t u = whole * kScale + frac;
        return Price(neg ? -u : u);
    }

    /// Shortest decimal form: `2931.75`, `1000`.
    std::string to_string() const {
        std::int64_t a = units_ < 0 ? -units_ : units_;
        std::string out = units_ < 0 ? "-" : "";
        out += std::to_string(a / kScale);
        std::int64_t frac = a % kScale;
        if (frac != 0) {
            std::string f = std::to_string(frac);
            f.insert(0, 6 - f.size(), '0');
            while (f.back() == '0') f.pop_back();
            out += '.';
            out += f;
        }
        return out;
    }

    friend constexpr auto operator<=>(Price, Price) = default;

private:
    constexpr explicit Price(std::int64_t u) : units_(u) {}
    std::int64_t units_ = 0;
};

/// Millisecond timestamp. Time-of-day stamps count from midnight; dated stamps
/// count from 1970-01-01 and remember that a date was present so they
/// serialize back with it.
struct Timestamp {
    std::int64_t ms = 0;
    bool dated = false;

    static constexpr std::int64_t kDayMs = 86'400'000;

    friend constexpr bool operator==(Timestamp a, Timestamp b) { return a.ms == b.ms; }
    friend constexpr auto operator<=>(Timestamp a, Timestamp b) { return a.ms <=> b.ms; }
};

namespace detail {

// Howard Hinnant's civil-day algorithms.
inline constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline constexpr void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y += m <= 2;
}

template <class Int>
bool parse_int(std::string_view s, Int& out) {
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

inline void append_padded(std::string& out, std::int64_t v, int width) {
    std::string s = std::to_string(v);
    if (static_cast<int>(s.size()) < width) out.append(static_cast<std::size_t>(width) - s.size(), '0');
    out += s;
}

}  // namespace detail

/// `HH:MM:SS[.f{1,3}]`; fractional digits are milliseconds scaled by position,
/// so `12.01` means 12 s 10 ms.
inline std::optional<std::int64_t> parse_time_of_day(std::string_view s) {
    if (s.size() < 8 || s[2] != ':' || s[5] != ':') return std::nullopt;
    int h = 0, m = 0, sec = 0;
    if (!detail::parse_int(s.substr(0, 2), h) || !detail::parse_int(s.substr(3, 2), m) ||
        !detail::parse_int(s.substr(6, 2), sec))
        return std::nullopt;
    if (h > 23 || m > 59 || sec > 60) return std::nullopt;
    std::int64_t ms = 0;
    if (s.size() > 8) {
        if (s[8] != '.') return std::nullopt;
        auto frac = s.substr(9);
        if (frac.empty() || frac.size() > 3) return std::nullopt;
        for (char c : frac) {
            if (c < '0' || c > '9') return std::nullopt;
            ms = ms * 10 + (c - '0');
        }
        for (std::size_t i = frac.size(); i < 3; ++i) ms *= 10;
    }
    return ((h * 60LL + m) * 60LL + sec) * 1000LL + ms;
}

/// `YYYY-MM-DD` to days since 1970-01-01.
inline std::optional<std::int64_t> parse_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    int y = 0;
    unsigned mo = 0, d = 0;
    if (!detail::parse_int(s.substr(0, 4), y) || !detail::parse_int(s.substr(5, 2), mo) ||
        !detail::parse_int(s.substr(8, 2), d))
        return std::nullopt;
    if (mo < 1 || mo > 12 || d < 1 || d > 31) return std::nullopt;
    return detail::days_from_civil(y, mo, d);
}

inline std::string format_time_of_day(std::int64_t ms) {
    std::string out;
    out.reserve(12);
    detail::append_padded(out, ms / 3'600'000, 2);
    out += ':';
    detail::append_padded(out, (ms / 60'000) % 60, 2);
    out += ':';
    detail::append_padded(out, (ms / 1000) % 60, 2);
    out += '.';
    detail::append_padded(out, ms % 1000, 3);
    return out;
}

inline std::string format_timestamp(Timestamp t) {
    if (!t.dated) return format_time_of_day(t.ms);
    std::int64_t days = t.ms >= 0 ? t.ms / Timestamp::kDayMs : (t.ms - Timestamp::kDayMs + 1) / Timestamp::kDayMs;
    std::int64_t tod = t.ms - days * Timestamp::kDayMs;
    std::int64_t y = 0;
    unsigned m = 0, d = 0;
    detail::civil_from_days(days, y, m, d);
    std::string out;
    detail::append_padded(out, y, 4);
    out += '-';
    detail::append_padded(out, m, 2);
    out += '-';
    detail::append_padded(out, d, 2);
    out += ' ';
    out += format_time_of_day(tod);
    return out;
}

/// Minimal value-or-error holder; the toolchain predates std::expected.
template <class T, class E>
class Expected {
public:
    Expected(T value) : v_(std::in_place_index<0>, std::move(value)) {}
    Expected(E error) : v_(std::in_place_index<1>, std::move(error)) {}

    bool has_value() const { return v_.index() == 0; }
    explicit operator bool() const { return has_value(); }

    T& value() & {
        if (!has_value()) throw std::logic_error("Expected::value() on error");
        return std::get<0>(v_);
    }
    const T& value() const& {
        if (!has_value()) throw std::logic_error("Expected::value() on error");
        return std::get<0>(v_);
    }
    T&& value() && { return std::move(value()); }
    const E& error() const { return std::get<1>(v_); }

    T* operator->() { return &value(); }
    const T* operator->() const { return &value(); }
    T& operator*() & { return value(); }
    const T& operator*() const& { return value(); }

private:
    std::variant<T, E> v_;
};

}  // namespace ice
