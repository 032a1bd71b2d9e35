#pragma once

// Visit-sequence encoder and Weibull Cox head, with hand-written reverse-mode
// gradients.
//
// Per visit, event embeddings are pooled by variable attention
//   a_j = q . tanh(W e_j),  alpha = softmax(a),  v = sum_j alpha_j e_j
// and a sinusoidal embedding of the gap since the previous visit is added.
// The visit rows then pass through pre-norm transformer layers (multi-head
// self-attention and a GELU feed-forward block, each with a residual), are
// mean-pooled, and concatenated with a linear projection of the static
// features. A final linear map gives the log relative hazard s.

#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cardio/cohort.hpp"
#include "cardio/core.hpp"
#include "cardio/risk/survival.hpp"
#include "json.hpp"

namespace cardio::risk {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

class VocabularyError : public Error {
public:
    using Error::Error;
};

class FeatureVocabulary {
public:
    FeatureVocabulary() = default;
    /// Tokens are de-duplicated and sorted; index order is stable.
    explicit FeatureVocabulary(std::vector<std::string> tokens);

    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::string& token(std::size_t i) const { return tokens_.at(i); }
    std::optional<std::size_t> find(std::string_view token) const;
    /// Throws VocabularyError naming the token.
    std::size_t index(std::string_view token) const;

    /// The generator vocabulary plus every token seen in the cohort.
    static FeatureVocabulary for_cohort(const sim::Cohort& cohort);

    friend bool operator==(const FeatureVocabulary&, const FeatureVocabulary&) = default;

private:
    std::vector<std::string> tokens_;
};

struct ModelConfig {
    int embed_dim = 32;
    int heads = 2;
    int layers = 1;
    int ffn_hidden = 64;
    int max_visits = 32;
    int static_proj_dim = 16;

    /// Throws ConfigError (embed_dim must be divisible by heads, ...).
    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Layout of the static feature vector:
///   [age_z, sex one-hot(3), stage/4, treatment one-hot, chest_discomfort,
///    palpitations, shortness_of_breath, hr_dev, resp_dev, spo2_dev,
///    screened-factor indicators...]
struct StaticLayout {
    double age_mean = 56.0;
    double age_sd = 11.0;
    std::vector<std::string> sexes{"female", "male", "other"};
    std::vector<std::string> treatments;
    std::vector<std::string> screened;

    std::size_t dim() const { return 1 + sexes.size() + 1 + treatments.size() + 6 + screened.size(); }
    std::size_t monitoring_offset() const { return 1 + sexes.size() + 1 + treatments.size(); }
    std::size_t screened_offset() const { return monitoring_offset() + 6; }
    friend bool operator==(const StaticLayout&, const StaticLayout&) = default;
};

/// Layout over the generator's treatment catalog with the given screened
/// tokens.
StaticLayout make_layout(std::vector<std::string> screened);

/// What the model sees about one patient at prediction time.
struct PatientInput {
    std::string patient_id;
    int age = 0;
    std::string sex;
    std::string cancer_stage;
    std::string treatment_type;
    std::vector<sim::VisitRecord> visits;
    sim::MonitoringSnapshot monitoring;
};

PatientInput make_input(const sim::PatientRecordSet& rec);

Vec static_features(const PatientInput& in, const StaticLayout& layout);

struct EncodedVisit {
    std::vector<std::size_t> tokens;
    double time = 0.0;
    double delta = 0.0; ///< days since previous retained visit; 0 for the first
};

/// Maps tokens through the vocabulary, drops visits without tokens, keeps the
/// most recent `max_visits`, and computes gaps. Throws VocabularyError.
std::vector<EncodedVisit> encode_visits(const std::vector<sim::VisitRecord>& visits, const FeatureVocabulary& vocab,
                                        int max_visits);

struct ModelInput {
    std::vector<EncodedVisit> visits;
    Vec statics;
};

// ---------------------------------------------------------------------------
// Parameters

struct LayerParams {
    Vec ln1_gain, ln1_bias;
    Mat wq, wk, wv, wo;
    Vec bq, bk, bv, bo;
    Vec ln2_gain, ln2_bias;
    Mat w1, w2;
    Vec b1, b2;
};

struct ModelParams {
    Mat embedding;  ///< V x d
    Vec attn_query; ///< d
    Mat attn_proj;  ///< d x d
    std::vector<LayerParams> layers;
    Mat static_proj; ///< p x S
    Vec static_bias; ///< p
    Vec head_weight; ///< d + p
    Vec head_bias;   ///< 1
    Vec shape_raw;   ///< 1
    Vec scale_raw;   ///< 1

    WeibullCoxHead head() const { return {shape_raw(0), scale_raw(0)}; }

    /// Same shapes, all zeros.
    ModelParams zeros_like() const;
    std::size_t parameter_count() const;
};

/// Visits every tensor with a stable name; `f(name, tensor)` where tensor is
/// an Eigen::MatrixXd& or Eigen::VectorXd&.
template <class Params, class F>
void for_each_tensor(Params& p, F&& f) {
    f("embedding", p.embedding);
    f("attn_query", p.attn_query);
    f("attn_proj", p.attn_proj);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        auto& L = p.layers[l];
        const std::string pre = "layer" + std::to_string(l) + ".";
        f(pre + "ln1_gain", L.ln1_gain);
        f(pre + "ln1_bias", L.ln1_bias);
        f(pre + "wq", L.wq);
        f(pre + "wk", L.wk);
        f(pre + "wv", L.wv);
        f(pre + "wo", L.wo);
        f(pre + "bq", L.bq);
        f(pre + "bk", L.bk);
        f(pre + "bv", L.bv);
        f(pre + "bo", L.bo);
        f(pre + "ln2_gain", L.ln2_gain);
        f(pre + "ln2_bias", L.ln2_bias);
        f(pre + "w1", L.w1);
        f(pre + "b1", L.b1);
        f(pre + "w2", L.w2);
        f(pre + "b2", L.b2);
    }
    f("static_proj", p.static_proj);
    f("static_bias", p.static_bias);
    f("head_weight", p.head_weight);
    f("head_bias", p.head_bias);
    f("shape_raw", p.shape_raw);
    f("scale_raw", p.scale_raw);
}

/// Embeddings ~ U(-0.05, 0.05), Xavier-uniform projections, unit layer-norm
/// gains, shape 1 and scale `initial_scale`.
ModelParams init_params(const ModelConfig& cfg, std::size_t vocab_size, std::size_t static_dim,
                        double initial_scale, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Building blocks (exposed for testing)

struct AttentionPool {
    Vec visit;  ///< d
    Vec weights; ///< m
};

/// Additive variable attention over the rows of `events` (m x d, m >= 1).
AttentionPool variable_attention(const Mat& events, const Vec& query, const Mat& proj);

/// Sinusoidal embedding: dim 2i = sin(dt / 10000^(2i/d)), dim 2i+1 = cos(.).
/// Throws ContractError for dt < 0.
Vec embed_time(double delta_days, int dim);

/// Row lookup; empty token list gives a 0 x d matrix.
Mat embed_events(std::span<const std::size_t> tokens, const Mat& embedding);

// ---------------------------------------------------------------------------
// Forward / backward

struct ForwardTrace; // opaque cache for backward

struct Forward {
    Vec health; ///< pooled sequence state ++ static projection
    double score = 0.0;
    /// Self-attention weights per layer per head (n x n), for inspection.
    std::vector<std::vector<Mat>> attention;
    std::vector<Vec> visit_weights;
};

/// Throws ContractError for an empty visit list.
Forward forward(const ModelInput& in, const ModelParams& p, const ModelConfig& cfg);

/// Accumulates d score / d params scaled by `d_score` into `grad`.
void backward(const ModelInput& in, const ModelParams& p, const ModelConfig& cfg, double d_score,
              ModelParams& grad);

struct Example {
    std::string patient_id;
    ModelInput input;
    double time = 1.0;
    bool observed = false;
};

/// Mean negative log-likelihood over the batch; if `grad` is given it
/// receives the gradient of that mean (overwritten). Throws NumericalError
/// naming the patient on a non-finite intermediate.
double wcph_loss(std::span<const Example> batch, const ModelParams& p, const ModelConfig& cfg,
                 ModelParams* grad = nullptr);

} // namespace cardio::risk
