#pragma once

// Shared test helpers: scratch directories, frozen oracle values, and the
// golden fixture data directory.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cardio/alert.hpp"
#include "cardio/cohort.hpp"
#include "cardio/records.hpp"
#include "cardio/risk/train.hpp"
#include "cardio/store.hpp"
#include "json.hpp"

namespace cardio::testkit {

/// Removed (recursively) on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

private:
    std::filesystem::path path_;
};

std::filesystem::path fixtures_dir();
std::filesystem::path share_dir();
const nlohmann::json& frozen();

/// Series of `n` samples at the device cadence starting at `t0`.
std::vector<VitalSample> constant_series(const std::string& pid, Metric m, EpochMs t0, std::size_t n, double value);

/// Minimal valid patient card.
PatientRecord card(const std::string& pid, const std::string& name = "Test Patient");

// ---------------------------------------------------------------------------
// Golden fixture

inline constexpr const char* kEmily = "P-EMILY";
inline constexpr const char* kEmpty = "P-EMPTY";
inline constexpr const char* kAnomaly = "P-ANOM";
inline constexpr const char* kEmilyDate = "2024-05-01";
inline constexpr const char* kAnomalyDate = "2024-05-02";
/// The anomaly patient's +40 bpm hour starts here.
inline constexpr EpochMs kAnomalyOnset = 1714658400000; ///< 2024-05-02T14:00Z

struct Golden {
    std::filesystem::path data_dir;
    std::filesystem::path model_path;
    std::size_t emily_assessments = 0;
};

/// Builds the golden data directory under `root`:
///  - Emily: patient card, two days of heart rate alternating 80/81 bpm,
///    SpO2 97 % and respiration 16 through baseline detection, check-in
///    sessions on 2024-04-30 and 2024-05-01 (one spans midnight), 30 daily
///    assessments ending at score 0.70 with shares 0.50/0.25/0.15/0.10, and one
///    note;
///  - an empty patient with only a card;
///  - an anomaly patient with a normal day then a day with a +40 bpm hour.
/// With `with_model`, a small model is trained and written next to the data.
Golden build_golden(const std::filesystem::path& root, bool with_model = false);

/// Deterministic small trained model (few epochs on a small cohort).
const risk::TrainedModel& tiny_model();
const sim::Cohort& tiny_cohort();

} // namespace cardio::testkit
