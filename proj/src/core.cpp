#include "cardio/core.hpp"

#include <charconv>
#include <chrono>

#include <fmt/format.h>

namespace cardio {

std::string utc_date(EpochMs t) {
    using namespace std::chrono;
    const auto day = floor_to(t, kDayMs) / kDayMs;
    const year_month_day ymd{sys_days{days{day}}};
    return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                       static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

EpochMs parse_utc_date(std::string_view date) {
    auto bad = [&] { return ValidationError(fmt::format("invalid date '{}', expected YYYY-MM-DD", date), {"date"}); };
    if (date.size() != 10 || date[4] != '-' || date[7] != '-') throw bad();
    auto num = [&](std::size_t pos, std::size_t len) {
        int v = 0;
        auto [p, ec] = std::from_chars(date.data() + pos, date.data() + pos + len, v);
        if (ec != std::errc{} || p != date.data() + pos + len) throw bad();
        return v;
    };
    using namespace std::chrono;
    const year_month_day ymd{year{num(0, 4)}, month{static_cast<unsigned>(num(5, 2))},
                             day{static_cast<unsigned>(num(8, 2))}};
    if (!ymd.ok()) throw bad();
    return static_cast<EpochMs>(sys_days{ymd}.time_since_epoch().count()) * kDayMs;
}

std::string utc_clock(EpochMs t) {
    const EpochMs in_day = t - floor_to(t, kDayMs);
    return fmt::format("{:02d}:{:02d}", in_day / kHourMs, (in_day % kHourMs) / kMinuteMs);
}

std::string_view to_string(Metric m) {
    switch (m) {
    case Metric::heart_rate: return "heart_rate";
    case Metric::respiration: return "respiration";
    case Metric::spo2: return "spo2";
    case Metric::skin_temp: return "skin_temp";
    }
    return "unknown";
}

std::optional<Metric> parse_metric(std::string_view s) {
    for (Metric m : kAllMetrics)
        if (to_string(m) == s) return m;
    return std::nullopt;
}

std::string_view metric_label(Metric m) {
    switch (m) {
    case Metric::heart_rate: return "Heart rate";
    case Metric::respiration: return "Respiration rate";
    case Metric::spo2: return "SpO2";
    case Metric::skin_temp: return "Skin temperature";
    }
    return "Unknown";
}

std::string_view metric_unit(Metric m) {
    switch (m) {
    case Metric::heart_rate: return "bpm";
    case Metric::respiration: return "breaths/min";
    case Metric::spo2: return "%";
    case Metric::skin_temp: return "C";
    }
    return "";
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
    // FNV-1a over the tag, folded into the seed.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix_seed(seed ^ mix_seed(h));
}

} // namespace cardio
