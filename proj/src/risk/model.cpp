#include "cardio/risk/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

namespace cardio::risk {

// ---------------------------------------------------------------------------
// Vocabulary and features

FeatureVocabulary::FeatureVocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    std::sort(tokens_.begin(), tokens_.end());
    tokens_.erase(std::unique(tokens_.begin(), tokens_.end()), tokens_.end());
}

std::optional<std::size_t> FeatureVocabulary::find(std::string_view token) const {
    auto it = std::lower_bound(tokens_.begin(), tokens_.end(), token);
    if (it == tokens_.end() || *it != token) return std::nullopt;
    return static_cast<std::size_t>(it - tokens_.begin());
}

std::size_t FeatureVocabulary::index(std::string_view token) const {
    if (auto i = find(token)) return *i;
    throw VocabularyError(fmt::format("token '{}' is not in the model vocabulary", token));
}

FeatureVocabulary FeatureVocabulary::for_cohort(const sim::Cohort& cohort) {
    std::vector<std::string> all = sim::code_tokens();
    all.insert(all.end(), sim::procedure_tokens().begin(), sim::procedure_tokens().end());
    all.insert(all.end(), sim::medication_tokens().begin(), sim::medication_tokens().end());
    for (const auto& rec : cohort.patients)
        for (const auto& v : rec.visits) {
            all.insert(all.end(), v.codes.begin(), v.codes.end());
            all.insert(all.end(), v.procedures.begin(), v.procedures.end());
            all.insert(all.end(), v.medications.begin(), v.medications.end());
        }
    return FeatureVocabulary(std::move(all));
}

void ModelConfig::validate() const {
    if (embed_dim < 2 || embed_dim % 2 != 0) throw ConfigError("embed_dim must be a positive even number");
    if (heads < 1 || embed_dim % heads != 0) throw ConfigError("embed_dim must be divisible by heads");
    if (layers < 0) throw ConfigError("layers must be >= 0");
    if (ffn_hidden < 1) throw ConfigError("ffn_hidden must be >= 1");
    if (max_visits < 1) throw ConfigError("max_visits must be >= 1");
    if (static_proj_dim < 1) throw ConfigError("static_proj_dim must be >= 1");
}

StaticLayout make_layout(std::vector<std::string> screened) {
    StaticLayout layout;
    for (const auto& [name, weight] : sim::treatment_catalog()) layout.treatments.push_back(name);
    layout.screened = std::move(screened);
    return layout;
}

PatientInput make_input(const sim::PatientRecordSet& rec) {
    const auto& p = rec.profile;
    return {p.patient_id, p.age, std::string(sim::to_string(p.sex)), p.cancer_stage, p.treatment_type,
            rec.visits, rec.monitoring};
}

Vec static_features(const PatientInput& in, const StaticLayout& layout) {
    Vec x = Vec::Zero(static_cast<Eigen::Index>(layout.dim()));
    Eigen::Index k = 0;
    x(k++) = (in.age - layout.age_mean) / layout.age_sd;
    for (const auto& s : layout.sexes) x(k++) = in.sex == s ? 1.0 : 0.0;
    x(k++) = sim::stage_ordinal(in.cancer_stage) / 4.0;
    for (const auto& t : layout.treatments) x(k++) = in.treatment_type == t ? 1.0 : 0.0;
    const auto& m = in.monitoring;
    x(k++) = m.chest_discomfort ? 1.0 : 0.0;
    x(k++) = m.palpitations ? 1.0 : 0.0;
    x(k++) = m.shortness_of_breath ? 1.0 : 0.0;
    x(k++) = m.hr_dev;
    x(k++) = m.resp_dev;
    x(k++) = m.spo2_dev;
    for (const auto& token : layout.screened) {
        bool present = false;
        for (const auto& v : in.visits) {
            present = std::find(v.codes.begin(), v.codes.end(), token) != v.codes.end() ||
                      std::find(v.procedures.begin(), v.procedures.end(), token) != v.procedures.end() ||
                      std::find(v.medications.begin(), v.medications.end(), token) != v.medications.end();
            if (present) break;
        }
        x(k++) = present ? 1.0 : 0.0;
    }
    return x;
}

std::vector<EncodedVisit> encode_visits(const std::vector<sim::VisitRecord>& visits, const FeatureVocabulary& vocab,
                                        int max_visits) {
    std::vector<EncodedVisit> out;
    for (const auto& v : visits) {
        if (v.token_count() == 0) continue;
        EncodedVisit e;
        e.time = v.visit_time;
        for (const auto* list : {&v.codes, &v.procedures, &v.medications})
            for (const auto& t : *list) e.tokens.push_back(vocab.index(t));
        out.push_back(std::move(e));
    }
    if (static_cast<int>(out.size()) > max_visits)
        out.erase(out.begin(), out.end() - max_visits);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double gap = i == 0 ? 0.0 : out[i].time - out[i - 1].time;
        if (gap < 0.0) throw ContractError("visit times must be non-decreasing");
        out[i].delta = gap;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parameters

ModelParams ModelParams::zeros_like() const {
    ModelParams z = *this;
    for_each_tensor(z, [](const std::string&, auto& t) { t.setZero(); });
    return z;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for_each_tensor(const_cast<ModelParams&>(*this),
                    [&](const std::string&, auto& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
}

ModelParams init_params(const ModelConfig& cfg, std::size_t vocab_size, std::size_t static_dim,
                        double initial_scale, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(mix_seed(seed ^ 0x5eedULL));
    const auto d = static_cast<Eigen::Index>(cfg.embed_dim);
    const auto f = static_cast<Eigen::Index>(cfg.ffn_hidden);
    const auto pdim = static_cast<Eigen::Index>(cfg.static_proj_dim);
    const auto sdim = static_cast<Eigen::Index>(static_dim);

    auto uniform = [&](Eigen::Index r, Eigen::Index c, double limit) {
        std::uniform_real_distribution<double> u(-limit, limit);
        Mat m(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
        return m;
    };
    auto xavier = [&](Eigen::Index out, Eigen::Index in) {
        return uniform(out, in, std::sqrt(6.0 / static_cast<double>(in + out)));
    };

    ModelParams p;
    p.embedding = uniform(static_cast<Eigen::Index>(vocab_size), d, 0.05);
    p.attn_proj = xavier(d, d);
    p.attn_query = uniform(d, 1, std::sqrt(3.0 / static_cast<double>(d))).col(0);
    for (int l = 0; l < cfg.layers; ++l) {
        LayerParams L;
        L.ln1_gain = Vec::Ones(d);
        L.ln1_bias = Vec::Zero(d);
        L.wq = xavier(d, d);
        L.wk = xavier(d, d);
        L.wv = xavier(d, d);
        L.wo = xavier(d, d);
        L.bq = L.bk = L.bv = L.bo = Vec::Zero(d);
        L.ln2_gain = Vec::Ones(d);
        L.ln2_bias = Vec::Zero(d);
        L.w1 = xavier(f, d);
        L.b1 = Vec::Zero(f);
        L.w2 = xavier(d, f);
        L.b2 = Vec::Zero(d);
        p.layers.push_back(std::move(L));
    }
    p.static_proj = xavier(pdim, std::max<Eigen::Index>(sdim, 1)).leftCols(sdim);
    p.static_bias = Vec::Zero(pdim);
    p.head_weight = uniform(d + pdim, 1, 0.1).col(0);
    p.head_bias = Vec::Zero(1);
    p.shape_raw = Vec::Constant(1, softplus_inverse(1.0));
    p.scale_raw = Vec::Constant(1, softplus_inverse(initial_scale));
    return p;
}

// ---------------------------------------------------------------------------
// Building blocks

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654; // sqrt(2 / pi)

Vec softmax(const Vec& a) {
    const double mx = a.maxCoeff();
    Vec e = (a.array() - mx).exp();
    return e / e.sum();
}

void softmax_rows(Mat& s) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const double mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
    }
}

double gelu(double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
}

double gelu_grad(double x) {
    const double t = std::tanh(kGeluC * (x + 0.044715 * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
}

struct LayerNormTrace {
    Mat xhat;
    Vec inv_std;
};

Mat layer_norm(const Mat& x, const Vec& gain, const Vec& bias, LayerNormTrace& tr) {
    const auto n = x.rows();
    tr.xhat.resize(n, x.cols());
    tr.inv_std.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mu = x.row(i).mean();
        const Eigen::RowVectorXd c = x.row(i).array() - mu;
        const double inv = 1.0 / std::sqrt(c.squaredNorm() / static_cast<double>(x.cols()) + kLayerNormEps);
        tr.inv_std(i) = inv;
        tr.xhat.row(i) = c * inv;
    }
    Mat y = tr.xhat.array().rowwise() * gain.transpose().array();
    y.rowwise() += bias.transpose();
    return y;
}

Mat layer_norm_backward(const Mat& dy, const Vec& gain, const LayerNormTrace& tr, Vec& d_gain, Vec& d_bias) {
    d_gain += (dy.array() * tr.xhat.array()).colwise().sum().transpose().matrix();
    d_bias += dy.colwise().sum().transpose();
    const Mat dxhat = dy.array().rowwise() * gain.transpose().array();
    Mat dx(dy.rows(), dy.cols());
    const double d = static_cast<double>(dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
        const double m1 = dxhat.row(i).sum() / d;
        const double m2 = dxhat.row(i).dot(tr.xhat.row(i)) / d;
        dx.row(i) = tr.inv_std(i) * (dxhat.row(i).array() - m1 - tr.xhat.row(i).array() * m2).matrix();
    }
    return dx;
}

} // namespace

Mat embed_events(std::span<const std::size_t> tokens, const Mat& embedding) {
    Mat out(static_cast<Eigen::Index>(tokens.size()), embedding.cols());
    for (std::size_t j = 0; j < tokens.size(); ++j) {
        if (tokens[j] >= static_cast<std::size_t>(embedding.rows()))
            throw VocabularyError(fmt::format("token index {} outside embedding table", tokens[j]));
        out.row(static_cast<Eigen::Index>(j)) = embedding.row(static_cast<Eigen::Index>(tokens[j]));
    }
    return out;
}

AttentionPool variable_attention(const Mat& events, const Vec& query, const Mat& proj) {
    if (events.rows() == 0) throw ContractError("variable attention needs at least one event");
    const Mat th = (events * proj.transpose()).array().tanh();
    AttentionPool out;
    out.weights = softmax(th * query);
    out.visit = events.transpose() * out.weights;
    return out;
}

Vec embed_time(double delta_days, int dim) {
    if (!(delta_days >= 0.0)) throw ContractError(fmt::format("time gap must be >= 0, got {}", delta_days));
    Vec e(dim);
    for (int i = 0; 2 * i < dim; ++i) {
        const double angle = delta_days / std::pow(10000.0, 2.0 * i / static_cast<double>(dim));
        e(2 * i) = std::sin(angle);
        if (2 * i + 1 < dim) e(2 * i + 1) = std::cos(angle);
    }
    return e;
}

// ---------------------------------------------------------------------------
// Forward / backward

struct VisitTrace {
    Mat events;
    Mat th;
    Vec alpha;
};

struct LayerTrace {
    LayerNormTrace ln1, ln2;
    Mat n1, q, k, v;
    std::vector<Mat> probs;
    Mat concat;
    Mat n2, h1, g;
};

struct ForwardTrace {
    std::vector<VisitTrace> visits;
    std::vector<LayerTrace> layers;
    Vec health;
    double score = 0.0;
};

namespace {

ForwardTrace trace_forward(const ModelInput& in, const ModelParams& p, const ModelConfig& cfg) {
    if (in.visits.empty()) throw ContractError("encoding needs at least one visit with tokens");
    const auto n = static_cast<Eigen::Index>(in.visits.size());
    const int d = cfg.embed_dim;
    ForwardTrace tr;
    tr.visits.resize(in.visits.size());

    Mat x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& visit = in.visits[static_cast<std::size_t>(i)];
        auto& vt = tr.visits[static_cast<std::size_t>(i)];
        vt.events = embed_events(visit.tokens, p.embedding);
        if (vt.events.rows() == 0) throw ContractError("visit without tokens reached the encoder");
        vt.th = (vt.events * p.attn_proj.transpose()).array().tanh();
        vt.alpha = softmax(vt.th * p.attn_query);
        x.row(i) = (vt.events.transpose() * vt.alpha + embed_time(visit.delta, d)).transpose();
    }

    const int dh = d / cfg.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    tr.layers.resize(p.layers.size());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const auto& L = p.layers[l];
        auto& lt = tr.layers[l];
        lt.n1 = layer_norm(x, L.ln1_gain, L.ln1_bias, lt.ln1);
        lt.q = (lt.n1 * L.wq.transpose()).rowwise() + L.bq.transpose();
        lt.k = (lt.n1 * L.wk.transpose()).rowwise() + L.bk.transpose();
        lt.v = (lt.n1 * L.wv.transpose()).rowwise() + L.bv.transpose();
        lt.concat.resize(n, d);
        lt.probs.resize(static_cast<std::size_t>(cfg.heads));
        for (int h = 0; h < cfg.heads; ++h) {
            Mat s = lt.q.middleCols(h * dh, dh) * lt.k.middleCols(h * dh, dh).transpose() * scale;
            softmax_rows(s);
            lt.concat.middleCols(h * dh, dh) = s * lt.v.middleCols(h * dh, dh);
            lt.probs[static_cast<std::size_t>(h)] = std::move(s);
        }
        x += (lt.concat * L.wo.transpose()).rowwise() + L.bo.transpose();
        lt.n2 = layer_norm(x, L.ln2_gain, L.ln2_bias, lt.ln2);
        lt.h1 = (lt.n2 * L.w1.transpose()).rowwise() + L.b1.transpose();
        lt.g = lt.h1.unaryExpr(&gelu);
        x += (lt.g * L.w2.transpose()).rowwise() + L.b2.transpose();
    }

    const Eigen::Index pdim = p.static_proj.rows();
    tr.health.resize(d + pdim);
    tr.health.head(d) = x.colwise().mean().transpose();
    tr.health.tail(pdim) = p.static_proj * in.statics + p.static_bias;
    tr.score = p.head_weight.dot(tr.health) + p.head_bias(0);
    return tr;
}

void trace_backward(const ForwardTrace& tr, const ModelInput& in, const ModelParams& p, const ModelConfig& cfg,
                    double d_score, ModelParams& g) {
    const int d = cfg.embed_dim;
    const auto n = static_cast<Eigen::Index>(in.visits.size());
    const Eigen::Index pdim = p.static_proj.rows();

    g.head_weight += d_score * tr.health;
    g.head_bias(0) += d_score;
    const Vec d_health = d_score * p.head_weight;
    const Vec d_static = d_health.tail(pdim);
    g.static_proj += d_static * in.statics.transpose();
    g.static_bias += d_static;

    Mat dx = (d_health.head(d) / static_cast<double>(n)).transpose().replicate(n, 1);

    const int dh = d / cfg.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t l = p.layers.size(); l-- > 0;) {
        const auto& L = p.layers[l];
        const auto& lt = tr.layers[l];
        auto& G = g.layers[l];

        // Feed-forward block.
        G.w2 += dx.transpose() * lt.g;
        G.b2 += dx.colwise().sum().transpose();
        const Mat d_g = dx * L.w2;
        const Mat d_h1 = d_g.array() * lt.h1.unaryExpr(&gelu_grad).array();
        G.w1 += d_h1.transpose() * lt.n2;
        G.b1 += d_h1.colwise().sum().transpose();
        dx += layer_norm_backward(d_h1 * L.w1, L.ln2_gain, lt.ln2, G.ln2_gain, G.ln2_bias);

        // Self-attention block.
        G.wo += dx.transpose() * lt.concat;
        G.bo += dx.colwise().sum().transpose();
        const Mat d_concat = dx * L.wo;
        Mat dq = Mat::Zero(n, d), dk = Mat::Zero(n, d), dv = Mat::Zero(n, d);
        for (int h = 0; h < cfg.heads; ++h) {
            const Mat& P = lt.probs[static_cast<std::size_t>(h)];
            const auto d_o = d_concat.middleCols(h * dh, dh);
            const Mat d_p = d_o * lt.v.middleCols(h * dh, dh).transpose();
            dv.middleCols(h * dh, dh) = P.transpose() * d_o;
            const Vec row_dot = (d_p.array() * P.array()).rowwise().sum();
            const Mat d_s = P.array() * (d_p.colwise() - row_dot).array();
            dq.middleCols(h * dh, dh) = scale * d_s * lt.k.middleCols(h * dh, dh);
            dk.middleCols(h * dh, dh) = scale * d_s.transpose() * lt.q.middleCols(h * dh, dh);
        }
        G.wq += dq.transpose() * lt.n1;
        G.wk += dk.transpose() * lt.n1;
        G.wv += dv.transpose() * lt.n1;
        G.bq += dq.colwise().sum().transpose();
        G.bk += dk.colwise().sum().transpose();
        G.bv += dv.colwise().sum().transpose();
        const Mat d_n1 = dq * L.wq + dk * L.wk + dv * L.wv;
        dx += layer_norm_backward(d_n1, L.ln1_gain, lt.ln1, G.ln1_gain, G.ln1_bias);
    }

    // Variable attention and embedding lookup. The time embedding has no
    // parameters.
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& vt = tr.visits[static_cast<std::size_t>(i)];
        const auto& tokens = in.visits[static_cast<std::size_t>(i)].tokens;
        const Vec d_v = dx.row(i).transpose();
        const Vec d_alpha = vt.events * d_v;
        Mat d_events = vt.alpha * d_v.transpose();
        const Vec d_a = vt.alpha.array() * (d_alpha.array() - vt.alpha.dot(d_alpha));
        g.attn_query += vt.th.transpose() * d_a;
        const Mat d_u = (d_a * p.attn_query.transpose()).array() * (1.0 - vt.th.array().square());
        g.attn_proj += d_u.transpose() * vt.events;
        d_events += d_u * p.attn_proj;
        for (std::size_t j = 0; j < tokens.size(); ++j)
            g.embedding.row(static_cast<Eigen::Index>(tokens[j])) += d_events.row(static_cast<Eigen::Index>(j));
    }
}

} // namespace

Forward forward(const ModelInput& in, const ModelParams& p, const ModelConfig& cfg) {
    const auto tr = trace_forward(in, p, cfg);
    Forward out;
    out.health = tr.health;
    out.score = tr.score;
    for (const auto& lt : tr.layers) out.attention.push_back(lt.probs);
    for (const auto& vt : tr.visits) out.visit_weights.push_back(vt.alpha);
    return out;
}

void backward(const ModelInput& in, const ModelParams& p, const ModelConfig& cfg, double d_score, ModelParams& grad) {
    trace_backward(trace_forward(in, p, cfg), in, p, cfg, d_score, grad);
}

double wcph_loss(std::span<const Example> batch, const ModelParams& p, const ModelConfig& cfg, ModelParams* grad) {
    if (batch.empty()) throw ContractError("loss needs a non-empty batch");
    if (grad) *grad = p.zeros_like();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const auto head = p.head();
    double total = 0.0;
    for (const auto& ex : batch) {
        const auto tr = trace_forward(ex.input, p, cfg);
        if (!std::isfinite(tr.score))
            throw NumericalError(fmt::format("non-finite risk score for patient '{}'", ex.patient_id));
        const auto terms = weibull_nll(head, tr.score, ex.time, ex.observed);
        if (!std::isfinite(terms.nll))
            throw NumericalError(fmt::format("non-finite likelihood for patient '{}'", ex.patient_id));
        total += terms.nll;
        if (grad) {
            trace_backward(tr, ex.input, p, cfg, terms.d_score * inv_b, *grad);
            grad->shape_raw(0) += terms.d_shape_raw * inv_b;
            grad->scale_raw(0) += terms.d_scale_raw * inv_b;
        }
    }
    return total * inv_b;
}

} // namespace cardio::risk
