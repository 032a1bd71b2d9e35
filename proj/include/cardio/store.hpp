#pragma once

// The information store. Everything lives under one root directory:
//
//   {patient_id}/patient.json
//   {patient_id}/manifest.json             per-partition counts and min/max t
//   {patient_id}/{metric}/{YYYY-MM-DD}.ndjson   {"t":..,"v":..} per line
//   {patient_id}/conversations/{YYYY-MM-DD}.ndjson
//   {patient_id}/assessments.ndjson, alerts.ndjson, notes.ndjson
//   {patient_id}/summaries/{YYYY-MM-DD}.json
//   {patient_id}/detectors/{metric}.json
//
// Vitals are idempotent on (patient_id, metric, t): a duplicate is counted and
// never overwrites the stored value. Buckets are aligned in UTC.
//
// Files are stored in plain text; encryption at rest is a deployment concern.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "cardio/cohort.hpp"
#include "cardio/core.hpp"
#include "cardio/records.hpp"
#include "json.hpp"

namespace cardio::store {

enum class Resolution { raw, minute, hour, day };

std::string_view to_string(Resolution r);
std::optional<Resolution> parse_resolution(std::string_view s);
EpochMs resolution_ms(Resolution r);

struct SeriesQuery {
    std::string patient_id;
    Metric metric = Metric::heart_rate;
    EpochMs from = 0;
    EpochMs to = 0; ///< exclusive
    Resolution resolution = Resolution::raw;
};

struct AggregateBucket {
    EpochMs bucket_start = 0;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::size_t count = 0;
    friend bool operator==(const AggregateBucket&, const AggregateBucket&) = default;
};

struct SeriesResult {
    Resolution resolution = Resolution::raw;
    std::vector<AggregateBucket> buckets; ///< empty for raw
    std::vector<VitalSample> samples;     ///< only for raw
};

struct Rejection {
    std::size_t index = 0;
    std::string reason;
};

struct IngestReceipt {
    std::size_t accepted = 0;
    std::size_t duplicates = 0;
    std::size_t rejected = 0;
    std::vector<Rejection> rejections;
    /// Newly stored samples, in batch order.
    std::vector<VitalSample> stored;
};

/// Throws ValidationError listing every invalid field.
void validate(const PatientRecord& r);

/// Builds the store-side patient card from a generated profile.
PatientRecord to_record(const sim::PatientProfile& p, std::string treatment_start);

class Store {
public:
    explicit Store(std::filesystem::path root);
    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;

    const std::filesystem::path& root() const noexcept { return root_; }

    PatientRecord upsert_patient(const PatientRecord& record);
    PatientRecord get_patient(const std::string& patient_id) const;
    bool has_patient(const std::string& patient_id) const;
    std::vector<PatientRecord> list_patients() const;

    IngestReceipt ingest_vitals(std::span<const VitalSample> batch);

    /// Throws ValidationError when from >= to and NotFoundError for an unknown
    /// patient. Empty buckets are omitted.
    SeriesResult query_series(const SeriesQuery& q) const;

    Turn append_turn(const std::string& patient_id, Turn turn);
    /// Turns whose timestamp falls on the UTC date, in timestamp order.
    std::vector<Turn> get_log(const std::string& patient_id, const std::string& date) const;
    /// Every stored turn, in timestamp order.
    std::vector<Turn> all_turns(const std::string& patient_id) const;

    Assessment store_assessment(Assessment a);
    Assessment fetch_assessment(const std::string& patient_id, const std::string& assessment_id) const;
    /// Ascending by t, restricted to [from, to).
    std::vector<Assessment> list_assessments(const std::string& patient_id, EpochMs from = INT64_MIN,
                                             EpochMs to = INT64_MAX) const;

    Alert store_alert(Alert a);
    Alert fetch_alert(const std::string& patient_id, const std::string& alert_id) const;
    std::vector<Alert> list_alerts(const std::string& patient_id, EpochMs from = INT64_MIN,
                                   EpochMs to = INT64_MAX) const;

    void store_summary(const std::string& patient_id, const std::string& date, const nlohmann::json& summary);
    nlohmann::json fetch_summary(const std::string& patient_id, const std::string& date) const;
    std::optional<nlohmann::json> find_summary(const std::string& patient_id, const std::string& date) const;

    Note add_note(const std::string& patient_id, const std::string& text, const std::string& author, EpochMs t);
    std::vector<Note> list_notes(const std::string& patient_id) const;

    void save_detector(const std::string& patient_id, Metric m, const nlohmann::json& state);
    std::optional<nlohmann::json> load_detector(const std::string& patient_id, Metric m) const;

private:
    struct Partition {
        std::shared_mutex mu;
        bool loaded = false;
        std::map<EpochMs, double> samples;
    };
    struct PartitionInfo {
        std::size_t count = 0;
        EpochMs min_t = 0;
        EpochMs max_t = 0;
    };

    std::filesystem::path partition_path(const std::string& pid, Metric m, const std::string& date) const;
    std::shared_ptr<Partition> partition(const std::string& pid, Metric m, const std::string& date) const;
    void load_partition(Partition& part, const std::filesystem::path& file) const;
    void write_manifest(const std::string& pid) const;
    void require_patient(const std::string& pid) const;

    template <class T>
    std::vector<T> read_records(const std::filesystem::path& file) const;
    template <class T>
    void append_record(const std::filesystem::path& file, const T& rec);
    std::size_t count_lines(const std::filesystem::path& file) const;

    std::filesystem::path root_;

    mutable std::shared_mutex patients_mu_;
    std::map<std::string, PatientRecord> patients_;

    mutable std::mutex partitions_mu_;
    mutable std::map<std::string, std::shared_ptr<Partition>> partitions_;

    mutable std::mutex manifest_mu_;
    std::map<std::string, std::map<std::string, PartitionInfo>> manifest_; ///< by patient

    static constexpr std::size_t kCachedPartitions = 512;

    mutable std::shared_mutex records_mu_;
};

/// Delivers emitted batches straight into a store.
class StoreSink : public sim::VitalSink {
public:
    explicit StoreSink(Store& store) : store_(store) {}
    void deliver(const IngestBatch& batch) override;
    std::size_t accepted() const { return accepted_; }

private:
    Store& store_;
    std::size_t accepted_ = 0;
};

void to_json(nlohmann::json& j, const AggregateBucket& b);
void to_json(nlohmann::json& j, const IngestReceipt& r);

} // namespace cardio::store
