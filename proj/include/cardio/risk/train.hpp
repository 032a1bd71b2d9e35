#pragma once

// Training, prediction, evaluation, and the model archive.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cardio/cohort.hpp"
#include "cardio/risk/model.hpp"
#include "cardio/risk/screening.hpp"
#include "json.hpp"

namespace cardio::risk {

inline constexpr int kModelFormatVersion = 1;

class TrainingDivergedError : public NumericalError {
public:
    TrainingDivergedError(std::string msg, int epoch, int batch)
        : NumericalError(std::move(msg)), epoch_(epoch), batch_(batch) {}
    int epoch() const noexcept { return epoch_; }
    int batch() const noexcept { return batch_; }

private:
    int epoch_;
    int batch_;
};

struct TrainConfig {
    double lr = 0.02;
    int batch_size = 32;
    int epochs = 40;
    std::uint64_t seed = 1;
    double momentum = 0.9;  ///< 0 gives plain SGD
    double clip_norm = 5.0; ///< global gradient-norm clip; 0 disables
    double validation_fraction = 0.2;
    ScreeningConfig screening;

    void validate() const;
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

/// Deterministic by seed; validation gets round(fraction * n) patients.
Split split_indices(std::size_t n, double validation_fraction, std::uint64_t seed);

struct EpochLoss {
    int epoch = 0; ///< 0 is the initial state
    double train_loss = 0.0;
    double validation_loss = 0.0;
    friend bool operator==(const EpochLoss&, const EpochLoss&) = default;
};

struct TrainMeta {
    std::uint64_t seed = 0;
    int epochs = 0;
    int best_epoch = 0;
    double final_loss = 0.0; ///< train loss at the returned parameters
    double horizon_days = 90.0;
    std::vector<RiskFactor> screened;
    std::vector<std::string> validation_ids;
    /// Mean static feature vector over the training split.
    std::vector<double> population_statics;
};

struct TrainedModel {
    FeatureVocabulary vocabulary;
    ModelConfig config;
    StaticLayout layout;
    ModelParams params;
    TrainMeta meta;

    ModelInput input_for(const PatientInput& in) const;
};

struct TrainResult {
    TrainedModel model;
    std::vector<EpochLoss> history;
};

/// Screens risk factors on the training split, initializes parameters, and
/// runs mini-batch SGD. Returns the parameters with the lowest validation
/// loss. Throws TrainingDivergedError on a non-finite batch loss.
TrainResult train(const sim::Cohort& cohort, const ModelConfig& cfg, const TrainConfig& tc);

/// Builds loss examples; patients without usable visits are skipped.
std::vector<Example> make_examples(const TrainedModel& model, const std::vector<sim::PatientRecordSet>& patients);

struct RiskPrediction {
    double score = 0.0;      ///< 1 - S(horizon | x)
    double risk_score = 0.0; ///< s
    double horizon_days = 0.0;
};

/// Throws VocabularyError on unknown tokens.
RiskPrediction predict_risk(const TrainedModel& model, const PatientInput& in, double horizon_days);

class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

/// Rank AUC with ties counted half. Throws UndefinedMetricError when a class
/// is empty.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Harrell's C over pairs with t_i < t_j and event i observed; higher score
/// means earlier event; ties in score count half. Throws
/// UndefinedMetricError when no pair is comparable.
double concordance_index(std::span<const double> scores, std::span<const double> times,
                         std::span<const int> observed);

struct EvalMetrics {
    double auc = 0.0;
    double concordance_index = 0.0;
    std::size_t patients = 0;
    std::size_t events_within_horizon = 0;
    double horizon_days = 0.0;
};

EvalMetrics evaluate_model(const TrainedModel& model, const std::vector<sim::PatientRecordSet>& patients,
                           double horizon_days);

/// Validation-split patients recorded at training time, in cohort order.
std::vector<sim::PatientRecordSet> validation_patients(const TrainedModel& model, const sim::Cohort& cohort);

nlohmann::json to_json(const TrainedModel& model);
TrainedModel model_from_json(const nlohmann::json& j);
void save_model(const TrainedModel& model, const std::filesystem::path& file);
/// Throws NotFoundError naming the path, or ValidationError on a bad archive.
TrainedModel load_model(const std::filesystem::path& file);

nlohmann::json to_json(const std::vector<EpochLoss>& history);

} // namespace cardio::risk
