#pragma once

// Records persisted by the information store and exchanged over the API.

#include <optional>
#include <string>
#include <vector>

#include "cardio/core.hpp"
#include "json.hpp"

namespace cardio {

struct PatientRecord {
    std::string patient_id;
    std::string name;
    int age = 0;
    std::string sex;
    std::string cancer_type;
    std::string cancer_stage;
    std::string treatment_type;
    std::string treatment_start; ///< YYYY-MM-DD
    std::vector<std::string> screened_risk_factors;

    friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

struct Note {
    std::string note_id;
    std::string patient_id;
    std::string author;
    EpochMs t = 0;
    std::string text;
    friend bool operator==(const Note&, const Note&) = default;
};

enum class Speaker { assistant, patient };
enum class TurnTag { normal, abnormal, red_flag };

std::string_view to_string(Speaker s);
std::string_view to_string(TurnTag t);

struct ExtractedSymptom {
    std::string symptom;
    bool negated = false;
    std::vector<std::string> severity_words;
    friend bool operator==(const ExtractedSymptom&, const ExtractedSymptom&) = default;
};

struct Turn {
    std::string turn_id;
    std::string session_id;
    std::string patient_id;
    Speaker speaker = Speaker::assistant;
    EpochMs t = 0;
    std::string text;
    std::vector<ExtractedSymptom> extracted;
    TurnTag tag = TurnTag::normal;
    friend bool operator==(const Turn&, const Turn&) = default;
};

enum class Severity { warning, critical };
std::string_view to_string(Severity s);

struct Alert {
    std::string alert_id;
    std::string patient_id;
    std::string source; ///< metric name, or "symptom:<token>"
    Severity severity = Severity::warning;
    EpochMs t_raised = 0;
    double z_peak = 0.0;
    std::string message;
    friend bool operator==(const Alert&, const Alert&) = default;
};

enum class Tier { routine, monitor, refer };
std::string_view to_string(Tier t);

struct AttributionRecord {
    std::string group_id;
    std::string label;
    double phi = 0.0;
    double share = 0.0;
    friend bool operator==(const AttributionRecord&, const AttributionRecord&) = default;
};

/// A risk prediction together with its explanation, as shown on the risk panel.
struct Assessment {
    std::string assessment_id;
    std::string patient_id;
    EpochMs t = 0;
    double horizon_days = 90.0;
    double score = 0.0;      ///< 1 - S(horizon)
    double risk_score = 0.0; ///< model log relative hazard
    Tier tier = Tier::routine;
    std::vector<AttributionRecord> attributions;
    std::string narrative;
    friend bool operator==(const Assessment&, const Assessment&) = default;
};

void to_json(nlohmann::json& j, const PatientRecord& r);
void from_json(const nlohmann::json& j, PatientRecord& r);
void to_json(nlohmann::json& j, const Note& n);
void from_json(const nlohmann::json& j, Note& n);
void to_json(nlohmann::json& j, const ExtractedSymptom& s);
void from_json(const nlohmann::json& j, ExtractedSymptom& s);
void to_json(nlohmann::json& j, const Turn& t);
void from_json(const nlohmann::json& j, Turn& t);
void to_json(nlohmann::json& j, const Alert& a);
void from_json(const nlohmann::json& j, Alert& a);
void to_json(nlohmann::json& j, const AttributionRecord& a);
void from_json(const nlohmann::json& j, AttributionRecord& a);
void to_json(nlohmann::json& j, const Assessment& a);
void from_json(const nlohmann::json& j, Assessment& a);

} // namespace cardio
