#pragma once

#include <icedetect/lob_ingest.hpp>

#include <string>
#include <vector>

namespace testing_helpers {

inline ice::OrderEvent ev(std::int64_t ms, ice::OrderId id, ice::Action a, ice::Volume v,
                          std::optional<ice::OrderId> affected = {}, ice::Side s = ice::Side::Sell,
                          const char* price = "100") {
    ice::OrderEvent e;
    e.time = {ms, false};
    e.order_id = id;
    e.side = s;
    e.action = a;
    e.price = *ice::Price::parse(price);
    e.volume = v;
    e.affected = affected;
    return e;
}

inline std::vector<ice::OrderEvent> load(const std::string& name) {
    auto s = ice::open_stream(std::string(ICEDETECT_DATA_DIR) + "/" + name);
    std::vector<ice::OrderEvent> out;
    while (auto e = s.next()) out.push_back(*e);
    return out;
}

}  // namespace testing_helpers
