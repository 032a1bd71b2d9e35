#pragma once

// Synthetic cohort generation: patient profiles, EHR visit histories with a
// planted cardiotoxicity signal, survival outcomes, and wearable vitals at the
// device cadence. Stands in for real patients and devices.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cardio/core.hpp"
#include "json.hpp"

namespace cardio::sim {

enum class Sex { female, male, other };

std::string_view to_string(Sex s);
Sex parse_sex(std::string_view s);

struct PatientProfile {
    std::string patient_id;
    std::string name;
    int age = 18;
    Sex sex = Sex::female;
    std::string cancer_type;
    std::string cancer_stage;
    std::string treatment_type;
    double resting_hr = 70.0;
    double resting_spo2 = 97.0;
    double resting_resp = 15.0;
    double resting_skin_temp = 33.5;
    /// Hidden generator variable in [0, 1]; never a model input.
    double latent_risk = 0.0;

    double resting(Metric m) const;
    friend bool operator==(const PatientProfile&, const PatientProfile&) = default;
};

/// Throws ValidationError naming every field outside its declared range.
void validate(const PatientProfile& p);

struct VisitRecord {
    double visit_time = 0.0; ///< days since treatment start
    std::vector<std::string> codes;
    std::vector<std::string> procedures;
    std::vector<std::string> medications;

    std::size_t token_count() const { return codes.size() + procedures.size() + medications.size(); }
    friend bool operator==(const VisitRecord&, const VisitRecord&) = default;
};

struct OutcomeLabel {
    double event_time = 1.0; ///< days since treatment start
    bool observed = false;   ///< false = right-censored
    friend bool operator==(const OutcomeLabel&, const OutcomeLabel&) = default;
};

/// Recent remote-monitoring summary at prediction time: self-reported symptom
/// indicators plus vitals deviations from the patient's own baseline in
/// baseline standard deviations.
struct MonitoringSnapshot {
    bool chest_discomfort = false;
    bool palpitations = false;
    bool shortness_of_breath = false;
    double hr_dev = 0.0;
    double resp_dev = 0.0;
    double spo2_dev = 0.0;
    friend bool operator==(const MonitoringSnapshot&, const MonitoringSnapshot&) = default;
};

struct CohortSpec {
    int n_patients = 100;
    int days = 1; ///< wearable monitoring days
    std::uint64_t seed = 0;
    double signal_strength = 1.0; ///< 0 = null cohort, 1 = "high"
    double followup_days = 365.0; ///< administrative censoring
    EpochMs start_ms = 1714521600000; ///< 2024-05-01T00:00Z

    friend bool operator==(const CohortSpec&, const CohortSpec&) = default;
};

/// Accepts "none", "low", "medium", "high" or a non-negative number.
double parse_signal_strength(std::string_view s);

struct PatientRecordSet {
    PatientProfile profile;
    std::vector<VisitRecord> visits;
    OutcomeLabel outcome;
    MonitoringSnapshot monitoring;
    friend bool operator==(const PatientRecordSet&, const PatientRecordSet&) = default;
};

struct Cohort {
    CohortSpec spec;
    std::vector<PatientRecordSet> patients;

    const PatientRecordSet& find(std::string_view patient_id) const;
    friend bool operator==(const Cohort&, const Cohort&) = default;
};

// Fixed synthetic vocabulary: 60 diagnosis codes, 20 procedures, 20
// medications, 5 of the codes designated risky.
const std::vector<std::string>& code_tokens();
const std::vector<std::string>& procedure_tokens();
const std::vector<std::string>& medication_tokens();
const std::vector<std::string>& risky_code_tokens();

/// Distinct risky codes appearing anywhere in a visit history.
int risky_code_count(const std::vector<VisitRecord>& visits);

/// Treatment types the generator draws from, with their cardiotoxicity weight.
const std::vector<std::pair<std::string, double>>& treatment_catalog();
/// Stage string ("IIA", "IV", ...) to ordinal 1..4; 0 when unparseable.
int stage_ordinal(std::string_view stage);

/// Log relative hazard the generator uses, centered at latent 0.5 and one
/// risky code.
double planted_log_hazard(double latent_risk, int risky_codes, double signal_strength);
inline constexpr double kBaseEventRatePerDay = 9e-4;

/// Deterministic for a fixed spec. Throws ConfigError for non-positive sizes.
Cohort generate_cohort(const CohortSpec& spec);

// ---------------------------------------------------------------------------
// Vitals
// ---------------------------------------------------------------------------

struct TimeWindow {
    EpochMs start = 0;
    EpochMs end = 0; ///< exclusive
    bool empty() const { return end <= start; }
};

/// Per-metric noise amplitude: the AR(1) deviation is clipped to +/- this.
double noise_amplitude(Metric m);

/// One sample per metric per 10 s tick in [start, end): resting baseline plus
/// bounded order-1 autoregressive noise, clipped to physical bounds. Samples
/// are grouped by metric (heart_rate, respiration, spo2, skin_temp), each
/// group in timestamp order. `noise_scale` multiplies every amplitude.
std::vector<VitalSample> sample_vitals(const PatientProfile& profile, TimeWindow window,
                                       std::uint64_t seed, double noise_scale = 1.0);

enum class AnomalyShape { step, ramp };

struct AnomalySpec {
    Metric metric = Metric::heart_rate;
    EpochMs start = 0;
    double duration_s = 60.0;
    double delta = 0.0;
    AnomalyShape shape = AnomalyShape::step;
};

/// Offsets samples of `spec.metric` in [start, start + duration]. A ramp grows
/// linearly from 0 at `start` to `delta` at the end of the window. Results are
/// clipped to physical bounds.
std::vector<VitalSample> inject_anomaly(std::vector<VitalSample> series, const AnomalySpec& spec);

// ---------------------------------------------------------------------------
// Streaming to an ingestion endpoint
// ---------------------------------------------------------------------------

class VitalSink {
public:
    virtual ~VitalSink() = default;
    /// Throws on delivery failure.
    virtual void deliver(const IngestBatch& batch) = 0;
};

struct EmissionReport {
    std::size_t batches = 0;
    std::size_t samples = 0;
    friend bool operator==(const EmissionReport&, const EmissionReport&) = default;
};

class PartialDeliveryError : public Error {
public:
    PartialDeliveryError(std::string msg, EmissionReport delivered, std::optional<EpochMs> last_t)
        : Error(std::move(msg)), delivered_(delivered), last_delivered_t_(last_t) {}
    const EmissionReport& delivered() const noexcept { return delivered_; }
    /// Timestamp of the last sample the sink acknowledged, if any.
    std::optional<EpochMs> last_delivered_t() const noexcept { return last_delivered_t_; }

private:
    EmissionReport delivered_;
    std::optional<EpochMs> last_delivered_t_;
};

struct EmitOptions {
    TimeWindow window;
    double batch_seconds = 600.0;
    std::uint64_t seed = 0;
    int max_attempts = 3;
    double noise_scale = 1.0;
};

/// Streams every patient's vitals over `opts.window`, batch by batch, in
/// timestamp order per stream.
EmissionReport emit_stream(const Cohort& cohort, VitalSink& sink, const EmitOptions& opts);

// ---------------------------------------------------------------------------
// Serialization: profiles.ndjson, visits.ndjson, outcomes.ndjson,
// monitoring.ndjson and cohort.json inside one directory.
// ---------------------------------------------------------------------------

void save_cohort(const Cohort& cohort, const std::filesystem::path& dir);
Cohort load_cohort(const std::filesystem::path& dir);

void to_json(nlohmann::json& j, const PatientProfile& p);
void from_json(const nlohmann::json& j, PatientProfile& p);
void to_json(nlohmann::json& j, const CohortSpec& s);
void from_json(const nlohmann::json& j, CohortSpec& s);
void to_json(nlohmann::json& j, const MonitoringSnapshot& m);
void from_json(const nlohmann::json& j, MonitoringSnapshot& m);

} // namespace cardio::sim
