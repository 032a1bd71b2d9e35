#include "cardio/alert.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

namespace cardio::alert {

using nlohmann::json;

std::optional<double> BaselineStats::variance() const {
    if (count < 2) return std::nullopt;
    return std::max(0.0, m2 / static_cast<double>(count - 1));
}

std::optional<double> BaselineStats::stddev() const {
    auto v = variance();
    if (!v) return std::nullopt;
    return std::sqrt(*v);
}

std::size_t BaselineStats::window_samples() const {
    return static_cast<std::size_t>(std::llround(window_days * static_cast<double>(kDayMs / kSampleIntervalMs)));
}

void AlertPolicy::validate() const {
    if (!(z_threshold > 0.0) || persistence_samples == 0 || !(cooldown_minutes > 0.0) || min_baseline_count == 0)
        throw ConfigError("alert policy fields must all be positive");
}

void to_json(json& j, const AlertPolicy& p) {
    j = json{{"z_threshold", p.z_threshold},
             {"persistence_samples", p.persistence_samples},
             {"cooldown_minutes", p.cooldown_minutes},
             {"min_baseline_count", p.min_baseline_count}};
}

void from_json(const json& j, AlertPolicy& p) {
    p.z_threshold = j.value("z_threshold", p.z_threshold);
    p.persistence_samples = j.value("persistence_samples", p.persistence_samples);
    p.cooldown_minutes = j.value("cooldown_minutes", p.cooldown_minutes);
    p.min_baseline_count = j.value("min_baseline_count", p.min_baseline_count);
}

AlertPolicy load_policy(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError(fmt::format("cannot read alert policy {}", file.string()));
    AlertPolicy p;
    try {
        p = json::parse(in).get<AlertPolicy>();
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("invalid alert policy {}: {}", file.string(), e.what()));
    }
    p.validate();
    return p;
}

BaselineStats update_baseline(BaselineStats stats, const VitalSample& sample) {
    if (sample.metric != stats.metric)
        throw ContractError(fmt::format("baseline for {} given a {} sample", to_string(stats.metric),
                                        to_string(sample.metric)));
    const double x = sample.value;
    const std::size_t n = stats.count + 1;
    const std::size_t window = std::max<std::size_t>(stats.window_samples(), 2);
    const double delta = x - stats.mean;
    if (n <= window) {
        // Welford.
        stats.mean += delta / static_cast<double>(n);
        stats.m2 += delta * (x - stats.mean);
    } else {
        // Exponentially weighted update at weight 1/window.
        const double w = 1.0 / static_cast<double>(window);
        const double var = stats.m2 / static_cast<double>(stats.count - 1);
        stats.mean += w * delta;
        const double next_var = (1.0 - w) * (var + w * delta * delta);
        stats.m2 = next_var * static_cast<double>(n - 1);
    }
    stats.count = n;
    return stats;
}

double z_score(const BaselineStats& stats, double value) {
    const auto sd = stats.stddev();
    if (!sd) return 0.0;
    const double dev = value - stats.mean;
    if (*sd == 0.0) {
        if (dev == 0.0) return 0.0;
        return dev > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    }
    return dev / *sd;
}

Severity severity_for(double z_peak, const AlertPolicy& policy) {
    return z_peak >= 2.0 * policy.z_threshold ? Severity::critical : Severity::warning;
}

Evaluation evaluate(const VitalSample& sample, const BaselineStats& stats, const AlertPolicy& policy,
                    const DetectorState& state) {
    Evaluation ev;
    ev.state = state;
    if (stats.count < policy.min_baseline_count) {
        ev.state.run_length = 0;
        ev.state.run_peak = 0.0;
        return ev;
    }
    ev.z = z_score(stats, sample.value);
    const double mag = std::abs(ev.z);
    if (mag < policy.z_threshold) {
        ev.state.run_length = 0;
        ev.state.run_peak = 0.0;
        return ev;
    }
    ++ev.state.run_length;
    ev.state.run_peak = std::max(ev.state.run_peak, mag);
    if (ev.state.run_length < policy.persistence_samples) return ev;

    const auto cooldown_ms = static_cast<EpochMs>(std::llround(policy.cooldown_minutes * kMinuteMs));
    if (state.last_alert && sample.t - *state.last_alert < cooldown_ms) return ev;

    Alert a;
    a.patient_id = sample.patient_id;
    a.source = std::string(to_string(sample.metric));
    a.t_raised = sample.t;
    a.z_peak = ev.state.run_peak;
    a.severity = severity_for(a.z_peak, policy);
    const bool above = ev.z > 0;
    a.message = fmt::format("{} {} baseline for {} consecutive samples ({:.0f} min); latest {:.1f} {}, baseline {:.1f}",
                            metric_label(sample.metric), above ? "above" : "below", ev.state.run_length,
                            static_cast<double>(ev.state.run_length * kSampleIntervalMs) / kMinuteMs,
                            sample.value, metric_unit(sample.metric), stats.mean);
    ev.alert = std::move(a);
    ev.state.last_alert = sample.t;
    return ev;
}

StreamDetector::StreamDetector(std::string patient_id, Metric metric, AlertPolicy policy, double window_days)
    : policy_(policy) {
    policy_.validate();
    stats_.patient_id = std::move(patient_id);
    stats_.metric = metric;
    stats_.window_days = window_days;
}

std::optional<Alert> StreamDetector::observe(const VitalSample& sample) {
    auto ev = evaluate(sample, stats_, policy_, state_);
    state_ = ev.state;
    stats_ = update_baseline(std::move(stats_), sample);
    return std::move(ev.alert);
}

json StreamDetector::to_json() const {
    json j{{"patient_id", stats_.patient_id}, {"metric", to_string(stats_.metric)},
           {"count", stats_.count},           {"mean", stats_.mean},
           {"m2", stats_.m2},                 {"window_days", stats_.window_days},
           {"run_length", state_.run_length}, {"run_peak", state_.run_peak}};
    j["last_alert"] = state_.last_alert ? json(*state_.last_alert) : json(nullptr);
    return j;
}

StreamDetector StreamDetector::from_json(const json& j, const AlertPolicy& policy) {
    const auto metric = parse_metric(j.at("metric").get<std::string>());
    if (!metric) throw ValidationError("detector state has an unknown metric", {"metric"});
    StreamDetector d(j.at("patient_id").get<std::string>(), *metric, policy, j.at("window_days").get<double>());
    d.stats_.count = j.at("count").get<std::size_t>();
    d.stats_.mean = j.at("mean").get<double>();
    d.stats_.m2 = j.at("m2").get<double>();
    d.state_.run_length = j.at("run_length").get<std::size_t>();
    d.state_.run_peak = j.at("run_peak").get<double>();
    if (!j.at("last_alert").is_null()) d.state_.last_alert = j.at("last_alert").get<EpochMs>();
    return d;
}

std::vector<Alert> scan(const std::vector<VitalSample>& series, const AlertPolicy& policy, double window_days) {
    std::vector<Alert> out;
    if (series.empty()) return out;
    StreamDetector det(series.front().patient_id, series.front().metric, policy, window_days);
    for (const auto& s : series)
        if (auto a = det.observe(s)) out.push_back(std::move(*a));
    return out;
}

Alert symptom_alert(const std::string& patient_id, const std::string& symptom, EpochMs t) {
    Alert a;
    a.patient_id = patient_id;
    a.source = "symptom:" + symptom;
    a.severity = Severity::critical;
    a.t_raised = t;
    a.z_peak = 0.0;
    std::string label = symptom;
    std::replace(label.begin(), label.end(), '_', ' ');
    a.message = fmt::format("Patient reported {}; red-flag symptom, contact the patient", label);
    return a;
}

} // namespace cardio::alert
