#include "cardio/risk/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>

namespace cardio::risk {

using nlohmann::json;

void TrainConfig::validate() const {
    if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be >= 0");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw ConfigError("validation_fraction must be in (0, 1)");
}

Split split_indices(std::size_t n, double validation_fraction, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, "split"));
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
    Split s;
    s.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(s.validation.begin(), s.validation.end());
    std::sort(s.train.begin(), s.train.end());
    return s;
}

ModelInput TrainedModel::input_for(const PatientInput& in) const {
    return {encode_visits(in.visits, vocabulary, config.max_visits), static_features(in, layout)};
}

std::vector<Example> make_examples(const TrainedModel& model, const std::vector<sim::PatientRecordSet>& patients) {
    std::vector<Example> out;
    out.reserve(patients.size());
    for (const auto& rec : patients) {
        auto input = model.input_for(make_input(rec));
        if (input.visits.empty()) continue;
        out.push_back({rec.profile.patient_id, std::move(input), rec.outcome.event_time, rec.outcome.observed});
    }
    return out;
}

namespace {

double median_event_time(const std::vector<sim::PatientRecordSet>& patients) {
    std::vector<double> t;
    for (const auto& p : patients)
        if (p.outcome.observed) t.push_back(p.outcome.event_time);
    if (t.empty())
        for (const auto& p : patients) t.push_back(p.outcome.event_time);
    std::sort(t.begin(), t.end());
    const std::size_t m = t.size() / 2;
    return t.size() % 2 ? t[m] : 0.5 * (t[m - 1] + t[m]);
}

double global_norm(ModelParams& g) {
    double sq = 0.0;
    for_each_tensor(g, [&](const std::string&, auto& t) { sq += t.squaredNorm(); });
    return std::sqrt(sq);
}

} // namespace

TrainResult train(const sim::Cohort& cohort, const ModelConfig& cfg, const TrainConfig& tc) {
    cfg.validate();
    tc.validate();
    if (cohort.patients.size() < 2) throw ConfigError("training needs at least two patients");

    const Split split = split_indices(cohort.patients.size(), tc.validation_fraction, tc.seed);
    std::vector<sim::PatientRecordSet> train_set, val_set;
    for (auto i : split.train) train_set.push_back(cohort.patients[i]);
    for (auto i : split.validation) val_set.push_back(cohort.patients[i]);

    TrainedModel model;
    model.vocabulary = FeatureVocabulary::for_cohort(cohort);
    model.config = cfg;
    model.meta.seed = tc.seed;
    model.meta.epochs = tc.epochs;
    model.meta.horizon_days = tc.screening.horizon_days;
    try {
        model.meta.screened = screen_risk_factors(train_set, tc.screening);
    } catch (const DegenerateLabelError&) {
        model.meta.screened.clear();
    }
    std::vector<std::string> screened;
    for (const auto& f : model.meta.screened) screened.push_back(f.token);
    model.layout = make_layout(std::move(screened));
    for (const auto& p : val_set) model.meta.validation_ids.push_back(p.profile.patient_id);

    model.params = init_params(cfg, model.vocabulary.size(), model.layout.dim(), median_event_time(train_set),
                               derive_seed(tc.seed, "init"));

    const auto train_ex = make_examples(model, train_set);
    const auto val_ex = make_examples(model, val_set);
    if (train_ex.empty() || val_ex.empty()) throw ConfigError("training split or validation split is empty");
    Vec mean_statics = Vec::Zero(static_cast<Eigen::Index>(model.layout.dim()));
    for (const auto& ex : train_ex) mean_statics += ex.input.statics;
    mean_statics /= static_cast<double>(train_ex.size());
    model.meta.population_statics.assign(mean_statics.data(), mean_statics.data() + mean_statics.size());

    TrainResult result;
    auto record = [&](int epoch) {
        EpochLoss e{epoch, wcph_loss(train_ex, model.params, cfg), wcph_loss(val_ex, model.params, cfg)};
        if (!std::isfinite(e.train_loss) || !std::isfinite(e.validation_loss))
            throw TrainingDivergedError(fmt::format("non-finite loss after epoch {}", epoch), epoch, -1);
        result.history.push_back(e);
        return e;
    };

    ModelParams best = model.params;
    EpochLoss best_loss = record(0);
    model.meta.best_epoch = 0;

    ModelParams velocity = model.params.zeros_like();
    ModelParams grad;
    std::mt19937_64 rng(derive_seed(tc.seed, "batches"));
    std::vector<std::size_t> order(train_ex.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<Example> batch;

    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        int b = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch_size), ++b) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(train_ex[order[i]]);
            double loss = 0.0;
            try {
                loss = wcph_loss(batch, model.params, cfg, &grad);
            } catch (const NumericalError& e) {
                throw TrainingDivergedError(fmt::format("epoch {} batch {}: {}", epoch, b, e.what()), epoch, b);
            }
            if (!std::isfinite(loss))
                throw TrainingDivergedError(fmt::format("non-finite loss at epoch {} batch {}", epoch, b), epoch, b);
            if (tc.clip_norm > 0.0) {
                const double norm = global_norm(grad);
                if (norm > tc.clip_norm) {
                    const double scale = tc.clip_norm / norm;
                    for_each_tensor(grad, [&](const std::string&, auto& t) { t *= scale; });
                }
            }
            std::vector<double*> vel;
            for_each_tensor(velocity, [&](const std::string&, auto& t) { vel.push_back(t.data()); });
            std::vector<std::pair<double*, Eigen::Index>> gr;
            for_each_tensor(grad, [&](const std::string&, auto& t) { gr.emplace_back(t.data(), t.size()); });
            std::size_t k = 0;
            for_each_tensor(model.params, [&](const std::string&, auto& t) {
                double* v = vel[k];
                const double* g = gr[k].first;
                double* w = t.data();
                for (Eigen::Index i = 0; i < t.size(); ++i) {
                    v[i] = tc.momentum * v[i] - tc.lr * g[i];
                    w[i] += v[i];
                }
                ++k;
            });
        }
        const EpochLoss e = record(epoch);
        if (e.validation_loss < best_loss.validation_loss) {
            best_loss = e;
            best = model.params;
            model.meta.best_epoch = epoch;
        }
    }
    model.params = std::move(best);
    model.meta.final_loss = best_loss.train_loss;
    result.model = std::move(model);
    return result;
}

RiskPrediction predict_risk(const TrainedModel& model, const PatientInput& in, double horizon_days) {
    if (!(horizon_days >= 0.0)) throw ContractError("horizon must be >= 0");
    const auto input = model.input_for(in);
    const double s = forward(input, model.params, model.config).score;
    return {1.0 - survival(model.params.head(), s, horizon_days), s, horizon_days};
}

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ContractError("scores and labels differ in length");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    // Mann-Whitney U with mid-ranks.
    double rank_sum = 0.0;
    std::size_t pos = 0, i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (labels[idx[k]]) {
                rank_sum += mid;
                ++pos;
            }
        i = j;
    }
    const std::size_t neg = scores.size() - pos;
    if (pos == 0 || neg == 0) throw UndefinedMetricError("AUC needs both positive and negative labels");
    const double p = static_cast<double>(pos);
    return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double concordance_index(std::span<const double> scores, std::span<const double> times,
                         std::span<const int> observed) {
    if (scores.size() != times.size() || scores.size() != observed.size())
        throw ContractError("scores, times, and observed differ in length");
    double concordant = 0.0;
    std::size_t comparable = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!observed[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (!(times[i] < times[j])) continue;
            ++comparable;
            if (scores[i] > scores[j]) concordant += 1.0;
            else if (scores[i] == scores[j]) concordant += 0.5;
        }
    }
    if (comparable == 0) throw UndefinedMetricError("no comparable pairs for the concordance index");
    return concordant / static_cast<double>(comparable);
}

EvalMetrics evaluate_model(const TrainedModel& model, const std::vector<sim::PatientRecordSet>& patients,
                           double horizon_days) {
    std::vector<double> scores, times, auc_scores;
    std::vector<int> observed, labels;
    EvalMetrics m;
    m.horizon_days = horizon_days;
    for (const auto& rec : patients) {
        const auto input = model.input_for(make_input(rec));
        if (input.visits.empty()) continue;
        const double s = forward(input, model.params, model.config).score;
        scores.push_back(s);
        times.push_back(rec.outcome.event_time);
        observed.push_back(rec.outcome.observed ? 1 : 0);
        const bool event = rec.outcome.observed && rec.outcome.event_time <= horizon_days;
        // Censored before the horizon: status unknown, excluded from AUC.
        if (event || rec.outcome.event_time > horizon_days) {
            auc_scores.push_back(s);
            labels.push_back(event ? 1 : 0);
            m.events_within_horizon += event ? 1 : 0;
        }
    }
    m.patients = scores.size();
    m.auc = auc(auc_scores, labels);
    m.concordance_index = concordance_index(scores, times, observed);
    return m;
}

std::vector<sim::PatientRecordSet> validation_patients(const TrainedModel& model, const sim::Cohort& cohort) {
    const std::set<std::string> ids(model.meta.validation_ids.begin(), model.meta.validation_ids.end());
    std::vector<sim::PatientRecordSet> out;
    for (const auto& p : cohort.patients)
        if (ids.count(p.profile.patient_id)) out.push_back(p);
    return out;
}

// ---------------------------------------------------------------------------
// Archive

namespace {

template <class T>
json tensor_to_json(const T& t) {
    json data = json::array();
    for (Eigen::Index i = 0; i < t.rows(); ++i)
        for (Eigen::Index j = 0; j < t.cols(); ++j) data.push_back(t(i, j));
    return {{"rows", t.rows()}, {"cols", t.cols()}, {"data", std::move(data)}};
}

template <class T>
void tensor_from_json(const json& j, const std::string& name, T& t) {
    if (!j.contains(name)) throw ValidationError(fmt::format("model archive is missing tensor '{}'", name), {name});
    const auto& e = j.at(name);
    const auto rows = e.at("rows").get<Eigen::Index>();
    const auto cols = e.at("cols").get<Eigen::Index>();
    const auto& data = e.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw ValidationError(fmt::format("tensor '{}' has {} values for shape {}x{}", name, data.size(), rows, cols),
                              {name});
    if constexpr (T::ColsAtCompileTime == 1) {
        if (cols != 1) throw ValidationError(fmt::format("tensor '{}' must be a column vector", name), {name});
        t.resize(rows);
    } else {
        t.resize(rows, cols);
    }
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            const double v = data[k++].get<double>();
            if (!std::isfinite(v)) throw ValidationError(fmt::format("tensor '{}' holds a non-finite value", name));
            t(r, c) = v;
        }
}

} // namespace

json to_json(const TrainedModel& m) {
    json tensors = json::object();
    for_each_tensor(const_cast<ModelParams&>(m.params),
                    [&](const std::string& name, auto& t) { tensors[name] = tensor_to_json(t); });
    json screened = json::array();
    for (const auto& f : m.meta.screened)
        screened.push_back({{"token", f.token}, {"coefficient", f.coefficient}, {"z", f.z}});
    return {
        {"format", "cardio-risk-model"},
        {"version", kModelFormatVersion},
        {"vocabulary", m.vocabulary.tokens()},
        {"config",
         {{"embed_dim", m.config.embed_dim},
          {"heads", m.config.heads},
          {"layers", m.config.layers},
          {"ffn_hidden", m.config.ffn_hidden},
          {"max_visits", m.config.max_visits},
          {"static_proj_dim", m.config.static_proj_dim}}},
        {"static_layout",
         {{"age_mean", m.layout.age_mean},
          {"age_sd", m.layout.age_sd},
          {"sexes", m.layout.sexes},
          {"treatments", m.layout.treatments},
          {"screened", m.layout.screened}}},
        {"tensors", std::move(tensors)},
        {"meta",
         {{"seed", m.meta.seed},
          {"epochs", m.meta.epochs},
          {"best_epoch", m.meta.best_epoch},
          {"final_loss", m.meta.final_loss},
          {"horizon_days", m.meta.horizon_days},
          {"screened", std::move(screened)},
          {"validation_ids", m.meta.validation_ids},
          {"population_statics", m.meta.population_statics}}},
    };
}

TrainedModel model_from_json(const json& j) {
    try {
        if (!j.contains("version")) throw ValidationError("model archive has no version field", {"version"});
        const int version = j.at("version").get<int>();
        if (version != kModelFormatVersion)
            throw ValidationError(fmt::format("unsupported model archive version {}", version), {"version"});
        TrainedModel m;
        m.vocabulary = FeatureVocabulary(j.at("vocabulary").get<std::vector<std::string>>());
        const auto& c = j.at("config");
        m.config.embed_dim = c.at("embed_dim").get<int>();
        m.config.heads = c.at("heads").get<int>();
        m.config.layers = c.at("layers").get<int>();
        m.config.ffn_hidden = c.at("ffn_hidden").get<int>();
        m.config.max_visits = c.at("max_visits").get<int>();
        m.config.static_proj_dim = c.at("static_proj_dim").get<int>();
        m.config.validate();
        const auto& s = j.at("static_layout");
        m.layout.age_mean = s.at("age_mean").get<double>();
        m.layout.age_sd = s.at("age_sd").get<double>();
        m.layout.sexes = s.at("sexes").get<std::vector<std::string>>();
        m.layout.treatments = s.at("treatments").get<std::vector<std::string>>();
        m.layout.screened = s.at("screened").get<std::vector<std::string>>();
        m.params.layers.resize(static_cast<std::size_t>(m.config.layers));
        const auto& tensors = j.at("tensors");
        for_each_tensor(m.params, [&](const std::string& name, auto& t) { tensor_from_json(tensors, name, t); });
        const auto& meta = j.at("meta");
        m.meta.seed = meta.at("seed").get<std::uint64_t>();
        m.meta.epochs = meta.at("epochs").get<int>();
        m.meta.best_epoch = meta.at("best_epoch").get<int>();
        m.meta.final_loss = meta.at("final_loss").get<double>();
        m.meta.horizon_days = meta.at("horizon_days").get<double>();
        for (const auto& f : meta.at("screened"))
            m.meta.screened.push_back({f.at("token").get<std::string>(), f.at("coefficient").get<double>(),
                                       f.at("z").get<double>()});
        m.meta.validation_ids = meta.at("validation_ids").get<std::vector<std::string>>();
        m.meta.population_statics = meta.at("population_statics").get<std::vector<double>>();
        if (m.meta.population_statics.size() != m.layout.dim())
            throw ValidationError("population statics do not match the static layout", {"meta.population_statics"});

        const auto d = m.config.embed_dim;
        if (m.params.embedding.rows() != static_cast<Eigen::Index>(m.vocabulary.size()) ||
            m.params.embedding.cols() != d)
            throw ValidationError("embedding shape does not match vocabulary and config", {"tensors.embedding"});
        if (m.params.static_proj.cols() != static_cast<Eigen::Index>(m.layout.dim()))
            throw ValidationError("static projection does not match the static layout", {"tensors.static_proj"});
        return m;
    } catch (const json::exception& e) {
        throw ValidationError(fmt::format("malformed model archive: {}", e.what()));
    }
}

void save_model(const TrainedModel& model, const std::filesystem::path& file) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file);
    if (!out) throw Error(fmt::format("cannot write model file '{}'", file.string()));
    out << to_json(model).dump() << '\n';
}

TrainedModel load_model(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw NotFoundError(fmt::format("model file '{}' not found", file.string()));
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(fmt::format("model file '{}' is not JSON: {}", file.string(), e.what()));
    }
    return model_from_json(j);
}

json to_json(const std::vector<EpochLoss>& history) {
    json out = json::array();
    for (const auto& e : history)
        out.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"validation_loss", e.validation_loss}});
    return out;
}

} // namespace cardio::risk
