#include <icedetect/lob_ingest.hpp>

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace ice;

namespace {

EventStream stream_of(std::istringstream& in) { return EventStream(in, "test"); }

std::vector<OrderEvent> drain(EventStream& s) {
    std::vector<OrderEvent> out;
    while (auto ev = s.next()) out.push_back(*ev);
    return out;
}

}  // namespace

TEST(Price, ParseAndFormat) {
    EXPECT_EQ(Price::parse("2931.75")->units(), 2'931'750'000);
    EXPECT_EQ(Price::parse("1000")->to_string(), "1000");
    EXPECT_EQ(Price::parse("2931.750")->to_string(), "2931.75");
    EXPECT_EQ(Price::parse("0.000001")->units(), 1);
    EXPECT_FALSE(Price::parse("1.0000001"));
    EXPECT_FALSE(Price::parse("abc"));
    EXPECT_FALSE(Price::parse(".5"));
}

TEST(Time, ParseTimeOfDay) {
    EXPECT_EQ(parse_time_of_day("14:05:33.416"), 14 * 3'600'000 + 5 * 60'000 + 33'416);
    // Two fractional digits are hundredths.
    EXPECT_EQ(parse_time_of_day("18:22:12.01"), 18 * 3'600'000 + 22 * 60'000 + 12'010);
    EXPECT_EQ(parse_time_of_day("00:00:01"), 1000);
    EXPECT_FALSE(parse_time_of_day("25:00:00"));
    EXPECT_FALSE(parse_time_of_day("12:00"));
    EXPECT_FALSE(parse_time_of_day("12:00:00.1234"));
    EXPECT_EQ(format_time_of_day(12'010), "00:00:12.010");
}

TEST(ParseRecord, TradeRow) {
    auto r = parse_record("14:05:33.416,645764830354,S,Trade,2931.75,2,645764830338");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->action, Action::Trade);
    EXPECT_EQ(r->side, Side::Sell);
    EXPECT_EQ(r->order_id, 645764830354ULL);
    EXPECT_EQ(r->volume, 2u);
    ASSERT_TRUE(r->affected);
    EXPECT_EQ(*r->affected, 645764830338ULL);
    EXPECT_EQ(r->price.to_string(), "2931.75");
}

TEST(ParseRecord, LimitRowHasNoAffected) {
    auto r = parse_record("14:05:33.416,645764830354,S,Limit,2931.75,6,-");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->action, Action::Limit);
    EXPECT_EQ(r->volume, 6u);
    EXPECT_FALSE(r->affected);
}

TEST(ParseRecord, Errors) {
    auto kind = [](std::string_view line) { return parse_record(line).error().kind; };
    EXPECT_EQ(kind("14:05:33.416,645764830354,S,Teleport,2931.75,6,-"), ParseErrorKind::UnknownAction);
    EXPECT_EQ(kind("14:05:61.416,1,S,Limit,1,6,-"), ParseErrorKind::MalformedTime);
    EXPECT_EQ(kind("14:05:33.416,1,S,Limit,1,-6,-"), ParseErrorKind::NegativeVolume);
    EXPECT_EQ(kind("14:05:33.416,1,S,Limit,-1,6,-"), ParseErrorKind::NegativePrice);
    EXPECT_EQ(kind("14:05:33.416,1,S,Limit,1,6"), ParseErrorKind::MissingField);
    EXPECT_EQ(kind("14:05:33.416,1,S,Trade,1,6,-"), ParseErrorKind::MissingField);
    EXPECT_EQ(kind("14:05:33.416,1,S,Limit,1,6,7"), ParseErrorKind::MalformedField);
    EXPECT_EQ(kind("14:05:33.416,1,X,Limit,1,6,-"), ParseErrorKind::MalformedField);
}

TEST(ParseRecord, ActionIsCaseInsensitive) {
    for (const char* a : {"limit", "LIMIT", "LiMiT"}) {
        auto r = parse_record(std::string("00:00:00.000,1,B,") + a + ",1,1,-");
        ASSERT_TRUE(r) << a;
        EXPECT_EQ(r->action, Action::Limit);
    }
}

TEST(ParseRecord, DatedTimestamps) {
    auto a = parse_record("2019-09-05,14:05:33.416,1,B,Limit,1,1,-");
    auto b = parse_record("2019-09-05 14:05:33.416,1,B,Limit,1,1,-");
    ASSERT_TRUE(a);
    ASSERT_TRUE(b);
    EXPECT_EQ(a->time.ms, b->time.ms);
    EXPECT_TRUE(a->time.dated);
    EXPECT_EQ(serialize_record(*a), "2019-09-05 14:05:33.416,1,B,LIMIT,1,1,-");
}

TEST(ParseRecord, RoundTripProperty) {
    std::mt19937 rng(7);
    const Action actions[] = {Action::Limit, Action::Modify, Action::Delete, Action::Trade};
    for (int i = 0; i < 2000; ++i) {
        OrderEvent ev;
        ev.time = {std::uniform_int_distribution<std::int64_t>(0, Timestamp::kDayMs - 1)(rng), false};
        ev.order_id = std::uniform_int_distribution<std::uint64_t>(0, 999'999'999'999ULL)(rng);
        ev.side = rng() % 2 ? Side::Buy : Side::Sell;
        ev.action = actions[rng() % 4];
        ev.price = Price::from_units(static_cast<std::int64_t>(rng() % 100'000) * 250'000);
        ev.volume = rng() % 1000;
        if (ev.action == Action::Trade) ev.affected = rng() % 1'000'000;
        const auto line = serialize_record(ev);
        auto back = parse_record(line);
        ASSERT_TRUE(back) << line;
        EXPECT_EQ(*back, ev) << line;
        EXPECT_EQ(serialize_record(*back), line);
    }
}

TEST(EventStream, NativeExampleYields21Events) {
    auto s = open_stream(std::string(ICEDETECT_DATA_DIR) + "/native_example.csv");
    auto evs = drain(s);
    EXPECT_EQ(evs.size(), 21u);
    EXPECT_EQ(s.rejected(), 0u);
    EXPECT_TRUE(s.had_header());
}

TEST(EventStream, EmptyInput) {
    std::istringstream in("");
    auto s = stream_of(in);
    EXPECT_TRUE(drain(s).empty());
    EXPECT_EQ(s.rejected(), 0u);
}

TEST(EventStream, MalformedRowIsRejectedWithLineNumber) {
    std::ostringstream text;
    text << kLogHeader << '\n';
    for (int i = 0; i < 10; ++i) {
        if (i == 4)
            text << "00:00:01.000,5,B,Jump,1,1,-\n";
        else
            text << "00:00:01.000," << i << ",B,Limit,1,1,-\n";
    }
    std::istringstream in(text.str());
    auto s = stream_of(in);
    EXPECT_EQ(drain(s).size(), 9u);
    EXPECT_EQ(s.rejected(), 1u);
    ASSERT_EQ(s.diagnostics().size(), 1u);
    EXPECT_EQ(s.diagnostics()[0].kind, DiagnosticKind::Rejected);
    EXPECT_EQ(s.diagnostics()[0].line, 6u);
}

TEST(EventStream, HeaderlessInput) {
    std::istringstream in("00:00:01.000,1,B,Limit,1,1,-\n00:00:01.000,2,B,Limit,1,1,-\n");
    auto s = stream_of(in);
    EXPECT_EQ(drain(s).size(), 2u);
    EXPECT_FALSE(s.had_header());
}

TEST(EventStream, TimeRegressionIsDiagnosedOnceAndProcessed) {
    auto s = open_stream(std::string(ICEDETECT_DATA_DIR) + "/synthetic_example.csv");
    auto evs = drain(s);
    EXPECT_EQ(evs.size(), 27u);
    EXPECT_EQ(s.ordering_violations(), 1u);
    ASSERT_EQ(s.diagnostics().size(), 1u);
    EXPECT_EQ(s.diagnostics()[0].kind, DiagnosticKind::OrderingViolation);
    // Row "18:22:13.00,103,..." follows "18:22:13.01,3,..." and sits on line 11.
    EXPECT_EQ(s.diagnostics()[0].line, 11u);
}

TEST(EventStream, WrongColumnCountIsFormatMismatch) {
    std::istringstream in("a;b;c\n1;2;3\n");
    EXPECT_THROW(stream_of(in), FormatMismatch);
}

TEST(EventStream, MissingFileIsIoError) { EXPECT_THROW(open_stream("/nonexistent/log.csv"), IoError); }
