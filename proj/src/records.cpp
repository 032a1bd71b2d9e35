#include "cardio/records.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace cardio {

using nlohmann::json;

namespace {

template <class E, std::size_t N>
E parse_enum(const json& j, const char* field, const std::array<E, N>& values) {
    const auto s = j.get<std::string>();
    for (E v : values)
        if (to_string(v) == s) return v;
    throw ValidationError(fmt::format("invalid {} '{}'", field, s), {field});
}

constexpr std::array kSpeakers = {Speaker::assistant, Speaker::patient};
constexpr std::array kTags = {TurnTag::normal, TurnTag::abnormal, TurnTag::red_flag};
constexpr std::array kSeverities = {Severity::warning, Severity::critical};
constexpr std::array kTiers = {Tier::routine, Tier::monitor, Tier::refer};

} // namespace

std::string_view to_string(Speaker s) { return s == Speaker::assistant ? "assistant" : "patient"; }

std::string_view to_string(TurnTag t) {
    switch (t) {
    case TurnTag::normal: return "normal";
    case TurnTag::abnormal: return "abnormal";
    case TurnTag::red_flag: return "red_flag";
    }
    return "normal";
}

std::string_view to_string(Severity s) { return s == Severity::warning ? "warning" : "critical"; }

std::string_view to_string(Tier t) {
    switch (t) {
    case Tier::routine: return "routine";
    case Tier::monitor: return "monitor";
    case Tier::refer: return "refer";
    }
    return "routine";
}

void to_json(json& j, const PatientRecord& r) {
    j = json{{"patient_id", r.patient_id},
             {"name", r.name},
             {"age", r.age},
             {"sex", r.sex},
             {"cancer_type", r.cancer_type},
             {"cancer_stage", r.cancer_stage},
             {"treatment_type", r.treatment_type},
             {"treatment_start", r.treatment_start},
             {"screened_risk_factors", r.screened_risk_factors}};
}

void from_json(const json& j, PatientRecord& r) {
    j.at("patient_id").get_to(r.patient_id);
    j.at("name").get_to(r.name);
    j.at("age").get_to(r.age);
    j.at("sex").get_to(r.sex);
    j.at("cancer_type").get_to(r.cancer_type);
    j.at("cancer_stage").get_to(r.cancer_stage);
    j.at("treatment_type").get_to(r.treatment_type);
    j.at("treatment_start").get_to(r.treatment_start);
    r.screened_risk_factors = j.value("screened_risk_factors", std::vector<std::string>{});
}

void to_json(json& j, const Note& n) {
    j = json{{"note_id", n.note_id}, {"patient_id", n.patient_id}, {"author", n.author}, {"t", n.t}, {"text", n.text}};
}

void from_json(const json& j, Note& n) {
    j.at("note_id").get_to(n.note_id);
    j.at("patient_id").get_to(n.patient_id);
    j.at("author").get_to(n.author);
    j.at("t").get_to(n.t);
    j.at("text").get_to(n.text);
}

void to_json(json& j, const ExtractedSymptom& s) {
    j = json{{"symptom", s.symptom}, {"negated", s.negated}, {"severity_words", s.severity_words}};
}

void from_json(const json& j, ExtractedSymptom& s) {
    j.at("symptom").get_to(s.symptom);
    j.at("negated").get_to(s.negated);
    s.severity_words = j.value("severity_words", std::vector<std::string>{});
}

void to_json(json& j, const Turn& t) {
    j = json{{"turn_id", t.turn_id}, {"session_id", t.session_id}, {"patient_id", t.patient_id},
             {"speaker", to_string(t.speaker)}, {"t", t.t}, {"text", t.text},
             {"extracted", t.extracted}, {"tag", to_string(t.tag)}};
}

void from_json(const json& j, Turn& t) {
    j.at("turn_id").get_to(t.turn_id);
    j.at("session_id").get_to(t.session_id);
    j.at("patient_id").get_to(t.patient_id);
    t.speaker = parse_enum(j.at("speaker"), "speaker", kSpeakers);
    j.at("t").get_to(t.t);
    j.at("text").get_to(t.text);
    t.extracted = j.value("extracted", std::vector<ExtractedSymptom>{});
    t.tag = parse_enum(j.at("tag"), "tag", kTags);
}

void to_json(json& j, const Alert& a) {
    j = json{{"alert_id", a.alert_id}, {"patient_id", a.patient_id}, {"source", a.source},
             {"severity", to_string(a.severity)}, {"t_raised", a.t_raised},
             {"z_peak", std::isfinite(a.z_peak) ? json(a.z_peak) : json(nullptr)},
             {"message", a.message}};
}

void from_json(const json& j, Alert& a) {
    j.at("alert_id").get_to(a.alert_id);
    j.at("patient_id").get_to(a.patient_id);
    j.at("source").get_to(a.source);
    a.severity = parse_enum(j.at("severity"), "severity", kSeverities);
    j.at("t_raised").get_to(a.t_raised);
    // An unbounded deviation (zero baseline spread) is stored as null.
    a.z_peak = j.at("z_peak").is_null() ? std::numeric_limits<double>::infinity() : j.at("z_peak").get<double>();
    j.at("message").get_to(a.message);
}

void to_json(json& j, const AttributionRecord& a) {
    j = json{{"group_id", a.group_id}, {"label", a.label}, {"phi", a.phi}, {"share", a.share}};
}

void from_json(const json& j, AttributionRecord& a) {
    j.at("group_id").get_to(a.group_id);
    j.at("label").get_to(a.label);
    j.at("phi").get_to(a.phi);
    j.at("share").get_to(a.share);
}

void to_json(json& j, const Assessment& a) {
    j = json{{"assessment_id", a.assessment_id}, {"patient_id", a.patient_id}, {"t", a.t},
             {"horizon_days", a.horizon_days},   {"score", a.score},           {"risk_score", a.risk_score},
             {"tier", to_string(a.tier)},        {"attributions", a.attributions},
             {"narrative", a.narrative}};
}

void from_json(const json& j, Assessment& a) {
    j.at("assessment_id").get_to(a.assessment_id);
    j.at("patient_id").get_to(a.patient_id);
    j.at("t").get_to(a.t);
    j.at("horizon_days").get_to(a.horizon_days);
    j.at("score").get_to(a.score);
    j.at("risk_score").get_to(a.risk_score);
    a.tier = parse_enum(j.at("tier"), "tier", kTiers);
    j.at("attributions").get_to(a.attributions);
    j.at("narrative").get_to(a.narrative);
}

} // namespace cardio
