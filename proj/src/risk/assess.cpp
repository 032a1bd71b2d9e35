#include "cardio/risk/assess.hpp"

#include <algorithm>
#include <set>

namespace cardio::risk {

namespace {

using Group = explain::FeatureGroup<ModelInput>;

Group static_group(std::string id, std::string label, std::vector<Eigen::Index> idx) {
    return {std::move(id), std::move(label), [idx = std::move(idx)](ModelInput& x, const ModelInput& ref) {
                for (auto i : idx) x.statics(i) = ref.statics(i);
            }};
}

std::vector<Eigen::Index> range(std::size_t from, std::size_t count) {
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(static_cast<Eigen::Index>(from + i));
    return out;
}

} // namespace

std::vector<explain::FeatureGroup<ModelInput>> default_groups(const TrainedModel& model) {
    const auto& L = model.layout;
    const std::size_t mon = L.monitoring_offset();
    std::vector<Group> groups;
    groups.push_back(static_group("chest_discomfort", "Chest Discomfort", range(mon, 1)));
    groups.push_back(static_group("palpitations", "Palpitations", range(mon + 1, 1)));
    groups.push_back(static_group("shortness_of_breath", "Shortness of Breath", range(mon + 2, 1)));
    groups.push_back(static_group("heart_rate", "Heart Rate", range(mon + 3, 1)));
    groups.push_back(static_group("respiration", "Respiration", range(mon + 4, 1)));
    groups.push_back(static_group("spo2", "SpO2", range(mon + 5, 1)));

    auto treatment_idx = range(1 + L.sexes.size() + 1, L.treatments.size());
    const auto screened_idx = range(L.screened_offset(), L.screened.size());
    treatment_idx.insert(treatment_idx.end(), screened_idx.begin(), screened_idx.end());
    groups.push_back({"treatment_history", "Treatment History", [treatment_idx](ModelInput& x, const ModelInput& ref) {
                          for (auto i : treatment_idx) x.statics(i) = ref.statics(i);
                          x.visits = ref.visits;
                      }});
    groups.push_back(static_group("demographics", "Demographics", range(0, 1 + L.sexes.size() + 1)));
    return groups;
}

ModelInput reference_input(const TrainedModel& model, const ModelInput& x) {
    const auto& L = model.layout;
    ModelInput ref;
    std::set<std::size_t> screened;
    for (const auto& t : L.screened)
        if (auto i = model.vocabulary.find(t)) screened.insert(*i);
    for (const auto& v : x.visits) {
        EncodedVisit kept = v;
        std::erase_if(kept.tokens, [&](std::size_t t) { return screened.count(t) > 0; });
        if (!kept.tokens.empty()) ref.visits.push_back(std::move(kept));
    }
    if (ref.visits.empty()) throw ContractError("reference input has no visits left after removing screened tokens");
    for (std::size_t i = 0; i < ref.visits.size(); ++i)
        ref.visits[i].delta = i == 0 ? 0.0 : ref.visits[i].time - ref.visits[i - 1].time;

    ref.statics = Vec::Zero(static_cast<Eigen::Index>(L.dim()));
    const auto& pop = model.meta.population_statics;
    const std::size_t demo_and_treatment = L.monitoring_offset();
    for (std::size_t i = 0; i < demo_and_treatment && i < pop.size(); ++i)
        ref.statics(static_cast<Eigen::Index>(i)) = pop[i];
    return ref;
}

Assessment assess(const TrainedModel& model, const PatientInput& patient, const AssessOptions& opts) {
    opts.explain.validate();
    const double horizon = opts.explain.horizon_days;
    const ModelInput x = model.input_for(patient);
    if (x.visits.empty()) throw ContractError("patient '" + patient.patient_id + "' has no visits with tokens");
    const ModelInput ref = reference_input(model, x);
    const auto groups = default_groups(model);
    const auto head = model.params.head();
    auto value = [&](const ModelInput& in) {
        return 1.0 - survival(head, forward(in, model.params, model.config).score, horizon);
    };
    const auto attributions = opts.explain.method == "sampled"
                                  ? explain::shapley_sampled(value, x, ref, groups, opts.explain.n_permutations,
                                                             opts.explain.seed)
                                  : explain::shapley_exact(value, x, ref, groups);

    const double s = forward(x, model.params, model.config).score;
    const double score = 1.0 - survival(head, s, horizon);
    const auto report = explain::render_explanation(score, horizon, attributions, opts.explain.thresholds);

    Assessment a;
    a.assessment_id = opts.assessment_id;
    a.patient_id = patient.patient_id;
    a.t = opts.t;
    a.horizon_days = horizon;
    a.score = score;
    a.risk_score = s;
    a.tier = report.tier;
    a.attributions = explain::to_records(report.attributions);
    a.narrative = report.narrative;
    return a;
}

} // namespace cardio::risk
