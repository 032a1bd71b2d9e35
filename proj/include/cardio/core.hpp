#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cardio {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid sizes, flags or configuration files.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A record failed validation. `fields()` names every offending field.
class ValidationError : public Error {
public:
    ValidationError(std::string msg, std::vector<std::string> fields = {})
        : Error(std::move(msg)), fields_(std::move(fields)) {}
    const std::vector<std::string>& fields() const noexcept { return fields_; }

private:
    std::vector<std::string> fields_;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

/// Caller broke a precondition (negative time, metric mismatch, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Time. Everything is UTC epoch milliseconds.
// ---------------------------------------------------------------------------

using EpochMs = std::int64_t;

inline constexpr EpochMs kSecondMs = 1000;
inline constexpr EpochMs kMinuteMs = 60 * kSecondMs;
inline constexpr EpochMs kHourMs = 60 * kMinuteMs;
inline constexpr EpochMs kDayMs = 24 * kHourMs;

/// Device sampling cadence.
inline constexpr EpochMs kSampleIntervalMs = 10 * kSecondMs;

/// Floor division that also works for instants before 1970.
constexpr EpochMs floor_to(EpochMs t, EpochMs unit) {
    EpochMs q = t / unit;
    if ((t % unit) != 0 && ((t < 0) != (unit < 0))) --q;
    return q * unit;
}

/// "YYYY-MM-DD" for the UTC day containing `t`.
std::string utc_date(EpochMs t);

/// Start of the UTC day named by "YYYY-MM-DD". Throws ValidationError.
EpochMs parse_utc_date(std::string_view date);

/// "HH:MM" UTC.
std::string utc_clock(EpochMs t);

// ---------------------------------------------------------------------------
// Wearable metrics
// ---------------------------------------------------------------------------

enum class Metric { heart_rate, respiration, spo2, skin_temp };

inline constexpr std::array<Metric, 4> kAllMetrics = {
    Metric::heart_rate, Metric::respiration, Metric::spo2, Metric::skin_temp};

std::string_view to_string(Metric m);
std::optional<Metric> parse_metric(std::string_view s);
/// Display label, e.g. "Heart rate".
std::string_view metric_label(Metric m);
std::string_view metric_unit(Metric m);

struct Bounds {
    double lo;
    double hi;
    constexpr bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Physical bounds a stored sample must lie in.
constexpr Bounds physical_bounds(Metric m) {
    switch (m) {
    case Metric::heart_rate: return {20.0, 250.0};
    case Metric::respiration: return {4.0, 60.0};
    case Metric::spo2: return {50.0, 100.0};
    case Metric::skin_temp: return {25.0, 42.0};
    }
    return {0.0, 0.0};
}

/// Range a patient's resting value may take.
constexpr Bounds resting_bounds(Metric m) {
    switch (m) {
    case Metric::heart_rate: return {40.0, 120.0};
    case Metric::respiration: return {8.0, 30.0};
    case Metric::spo2: return {85.0, 100.0};
    case Metric::skin_temp: return {30.0, 40.0};
    }
    return {0.0, 0.0};
}

struct VitalSample {
    std::string patient_id;
    Metric metric = Metric::heart_rate;
    EpochMs t = 0;
    double value = 0.0;

    friend bool operator==(const VitalSample&, const VitalSample&) = default;
};

/// One transmission unit: a chunk of a single (patient, metric) stream.
struct IngestBatch {
    std::string patient_id;
    std::string device_id;
    Metric metric = Metric::heart_rate;
    std::vector<VitalSample> samples;
};

/// 64-bit mixer used to derive independent sub-seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

} // namespace cardio
