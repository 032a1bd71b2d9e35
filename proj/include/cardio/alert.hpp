#pragma once

// Patient-specific baselines and deviation alerts.
//
// A baseline is a running mean/variance per (patient, metric). Up to the
// effective window (window_days of samples at the device cadence) it is the
// exact Welford estimate; past that it forgets exponentially with weight
// 1/window so memory stays constant. Alerts fire only once the baseline is
// armed and |z| has stayed at or above the threshold for a run of consecutive
// samples; a per-metric cooldown suppresses repeats.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cardio/core.hpp"
#include "cardio/records.hpp"
#include "json.hpp"

namespace cardio::alert {

struct BaselineStats {
    std::string patient_id;
    Metric metric = Metric::heart_rate;
    std::size_t count = 0;
    double mean = 0.0;
    double m2 = 0.0; ///< sum of squared deviations; variance = m2 / (count - 1)
    double window_days = 14.0;

    std::optional<double> variance() const;
    std::optional<double> stddev() const;
    /// Samples after which exponential forgetting takes over.
    std::size_t window_samples() const;
    friend bool operator==(const BaselineStats&, const BaselineStats&) = default;
};

struct AlertPolicy {
    double z_threshold = 3.0;
    std::size_t persistence_samples = 30;
    double cooldown_minutes = 60.0;
    std::size_t min_baseline_count = 8640;

    /// Throws ConfigError unless every field is positive.
    void validate() const;
};

AlertPolicy load_policy(const std::filesystem::path& file);
void to_json(nlohmann::json& j, const AlertPolicy& p);
void from_json(const nlohmann::json& j, AlertPolicy& p);

/// Contract error if the sample's metric differs from the baseline's.
BaselineStats update_baseline(BaselineStats stats, const VitalSample& sample);

/// (value - mean) / std. A zero std gives +/-infinity for any deviation and 0
/// otherwise; an undefined std (count < 2) gives 0.
double z_score(const BaselineStats& stats, double value);

/// Per-stream detector state carried between samples.
struct DetectorState {
    std::size_t run_length = 0; ///< consecutive samples at or above threshold
    double run_peak = 0.0;      ///< max |z| within the current run
    std::optional<EpochMs> last_alert;
    friend bool operator==(const DetectorState&, const DetectorState&) = default;
};

struct Evaluation {
    std::optional<Alert> alert;
    DetectorState state;
    double z = 0.0;
};

/// Scores one sample against the (pre-update) baseline. Pure.
Evaluation evaluate(const VitalSample& sample, const BaselineStats& stats, const AlertPolicy& policy,
                    const DetectorState& state);

Severity severity_for(double z_peak, const AlertPolicy& policy);

/// Fold of evaluate-then-update over one stream; the unit the service keeps
/// per (patient, metric).
class StreamDetector {
public:
    StreamDetector(std::string patient_id, Metric metric, AlertPolicy policy, double window_days = 14.0);

    /// Returns an alert when one is raised by this sample.
    std::optional<Alert> observe(const VitalSample& sample);

    const BaselineStats& baseline() const { return stats_; }
    const DetectorState& state() const { return state_; }
    const AlertPolicy& policy() const { return policy_; }

    nlohmann::json to_json() const;
    static StreamDetector from_json(const nlohmann::json& j, const AlertPolicy& policy);

private:
    BaselineStats stats_;
    AlertPolicy policy_;
    DetectorState state_;
};

/// Runs a fresh detector over a time-ordered single-stream series.
std::vector<Alert> scan(const std::vector<VitalSample>& series, const AlertPolicy& policy,
                        double window_days = 14.0);

/// Critical alert for a red-flag symptom report; bypasses persistence.
Alert symptom_alert(const std::string& patient_id, const std::string& symptom, EpochMs t);

} // namespace cardio::alert
