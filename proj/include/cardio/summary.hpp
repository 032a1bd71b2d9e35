#pragma once

// Daily summary: per-metric statistics for one UTC date, deviation flags
// against the patient's baselines, that date's symptom mentions and alerts,
// and a deterministic template rendering.
//
// A metric is flagged when some hourly mean has |z| >= the alert policy's
// threshold under alert::z_score against the supplied baseline.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cardio/alert.hpp"
#include "cardio/provider.hpp"
#include "cardio/records.hpp"
#include "cardio/store.hpp"
#include "json.hpp"

namespace cardio::summary {

struct MetricStats {
    Metric metric = Metric::heart_rate;
    double mean = 0.0; ///< rounded to 0.01
    double min = 0.0;
    double max = 0.0;
    std::size_t count = 0;
    bool deviation_flag = false;
    double peak_hourly_z = 0.0; ///< signed z of the hourly mean with the largest |z|; 0 without a baseline
    std::optional<EpochMs> peak_hour;
    friend bool operator==(const MetricStats&, const MetricStats&) = default;
};

struct SymptomMention {
    std::string symptom;
    std::string label;
    EpochMs t = 0;
    TurnTag tag = TurnTag::normal;
    friend bool operator==(const SymptomMention&, const SymptomMention&) = default;
};

struct DailySummary {
    std::string patient_id;
    std::string date;
    std::vector<MetricStats> metrics; ///< metrics with data, in Metric order
    std::vector<SymptomMention> symptoms;
    std::size_t alert_count = 0;
    std::vector<std::string> note_hooks; ///< texts of notes written that date
    std::string rendered_text;           ///< always the template rendering
    std::string provider = "template";
    std::optional<std::string> generated_text; ///< alternative provider output, kept alongside
    std::optional<std::string> provenance_note;

    bool empty() const { return metrics.empty() && symptoms.empty() && alert_count == 0; }
    friend bool operator==(const DailySummary&, const DailySummary&) = default;
};

using Baselines = std::map<Metric, alert::BaselineStats>;

/// Baselines recovered from the store's persisted per-stream detectors.
Baselines baselines_from_store(const store::Store& store, const std::string& patient_id,
                               const alert::AlertPolicy& policy);

/// Throws NotFoundError for an unknown patient and ValidationError for a bad
/// date. The rendered text is the template rendering.
DailySummary build_daily_summary(const store::Store& store, const std::string& patient_id, const std::string& date,
                                 const Baselines& baselines, const alert::AlertPolicy& policy);

/// Deterministic template: headline, per-metric lines, symptom lines.
std::string render_template(const DailySummary& s);

/// Text to display. Without a provider this is the template. With one, its
/// output is stored in `generated_text` and returned; if it throws, the
/// template is returned with a provenance note.
std::string render_summary(DailySummary& s, TextProvider* provider);

nlohmann::json to_json(const DailySummary& s);
DailySummary summary_from_json(const nlohmann::json& j);

} // namespace cardio::summary
