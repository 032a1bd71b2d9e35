#pragma once

// Model-level explanation: the default clinician-facing feature groups over
// the model input, the population reference, and the full assessment.

#include <string>
#include <vector>

#include "cardio/explain.hpp"
#include "cardio/records.hpp"
#include "cardio/risk/train.hpp"

namespace cardio::risk {

/// Eight groups: chest discomfort, palpitations, shortness of breath, heart
/// rate, respiration, SpO2, treatment history (treatment type, screened-token
/// indicators, and screened tokens in the visits), demographics (age, sex,
/// stage).
std::vector<explain::FeatureGroup<ModelInput>> default_groups(const TrainedModel& model);

/// The patient's visits without screened tokens; symptom indicators,
/// deviations, and screened indicators at 0; demographics and treatment at
/// the training-population means.
ModelInput reference_input(const TrainedModel& model, const ModelInput& x);

struct AssessOptions {
    explain::ExplainConfig explain;
    EpochMs t = 0;
    std::string assessment_id;
};

/// Score, attributions over the default groups, tier, and narrative.
Assessment assess(const TrainedModel& model, const PatientInput& patient, const AssessOptions& opts);

} // namespace cardio::risk
