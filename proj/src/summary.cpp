#include "cardio/summary.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace cardio::summary {

using nlohmann::json;

namespace {

double round2(double v) { return std::round(v * 100.0) / 100.0; }

std::string symptom_label(std::string token) {
    std::replace(token.begin(), token.end(), '_', ' ');
    return token;
}

std::string number(double v) { return fmt::format("{}", v); }

} // namespace

Baselines baselines_from_store(const store::Store& store, const std::string& patient_id,
                               const alert::AlertPolicy& policy) {
    Baselines out;
    for (Metric m : kAllMetrics)
        if (auto state = store.load_detector(patient_id, m))
            out.emplace(m, alert::StreamDetector::from_json(*state, policy).baseline());
    return out;
}

DailySummary build_daily_summary(const store::Store& store, const std::string& patient_id, const std::string& date,
                                 const Baselines& baselines, const alert::AlertPolicy& policy) {
    const EpochMs day_start = parse_utc_date(date);
    const EpochMs day_end = day_start + kDayMs;
    if (!store.has_patient(patient_id)) throw NotFoundError(fmt::format("unknown patient '{}'", patient_id));

    DailySummary s;
    s.patient_id = patient_id;
    s.date = utc_date(day_start);

    for (Metric m : kAllMetrics) {
        const auto day = store.query_series({patient_id, m, day_start, day_end, store::Resolution::day});
        if (day.buckets.empty()) continue;
        const auto& b = day.buckets.front();
        MetricStats ms;
        ms.metric = m;
        ms.mean = round2(b.mean);
        ms.min = round2(b.min);
        ms.max = round2(b.max);
        ms.count = b.count;
        if (auto it = baselines.find(m); it != baselines.end()) {
            const auto hours = store.query_series({patient_id, m, day_start, day_end, store::Resolution::hour});
            for (const auto& h : hours.buckets) {
                const double z = alert::z_score(it->second, h.mean);
                if (!ms.peak_hour || std::abs(z) > std::abs(ms.peak_hourly_z)) {
                    ms.peak_hourly_z = z;
                    ms.peak_hour = h.bucket_start;
                }
                if (std::abs(z) >= policy.z_threshold) ms.deviation_flag = true;
            }
        }
        s.metrics.push_back(ms);
    }

    for (const auto& turn : store.get_log(patient_id, s.date)) {
        if (turn.speaker != Speaker::patient || turn.tag == TurnTag::normal) continue;
        for (const auto& e : turn.extracted)
            if (!e.negated) s.symptoms.push_back({e.symptom, symptom_label(e.symptom), turn.t, turn.tag});
    }
    s.alert_count = store.list_alerts(patient_id, day_start, day_end).size();
    for (const auto& n : store.list_notes(patient_id))
        if (n.t >= day_start && n.t < day_end) s.note_hooks.push_back(n.text);

    s.rendered_text = render_template(s);
    return s;
}

std::string render_template(const DailySummary& s) {
    if (s.empty()) return fmt::format("No data recorded for {}.", s.date);

    std::vector<std::string> issues;
    for (const auto& m : s.metrics)
        if (m.deviation_flag)
            issues.push_back(fmt::format("{} {} baseline", metric_label(m.metric),
                                         m.peak_hourly_z >= 0 ? "above" : "below"));
    std::string out = fmt::format("Daily summary for {}\n", s.date);
    if (issues.empty() && s.alert_count == 0) {
        out += "No abnormalities detected.\n";
    } else {
        std::string headline = "Attention:";
        if (!issues.empty()) headline += " " + fmt::format("{}", fmt::join(issues, "; ")) + ".";
        if (s.alert_count > 0)
            headline += fmt::format(" {} alert{} raised.", s.alert_count, s.alert_count == 1 ? "" : "s");
        out += headline + "\n";
    }

    if (!s.metrics.empty()) {
        out += "Vitals:\n";
        for (const auto& m : s.metrics)
            out += fmt::format("- {}: {} {} average (min {}, max {}){}\n", metric_label(m.metric), number(m.mean),
                               metric_unit(m.metric), number(m.min), number(m.max),
                               m.deviation_flag ? ", deviates from baseline" : "");
    }
    out += "Self-reported symptoms:\n";
    if (s.symptoms.empty()) out += "- none reported\n";
    for (const auto& sym : s.symptoms)
        out += fmt::format("- {} at {} UTC ({})\n", sym.label, utc_clock(sym.t), to_string(sym.tag));
    for (const auto& n : s.note_hooks) out += fmt::format("Note: {}\n", n);
    return out;
}

std::string render_summary(DailySummary& s, TextProvider* provider) {
    s.rendered_text = render_template(s);
    s.provider = "template";
    s.generated_text.reset();
    s.provenance_note.reset();
    if (!provider) return s.rendered_text;
    try {
        DailySummary data = s;
        data.rendered_text.clear();
        std::string text = provider->generate({"daily_summary", to_json(data)});
        s.provider = provider->name();
        s.generated_text = text;
        return text;
    } catch (const std::exception& e) {
        s.provenance_note = fmt::format("Text provider '{}' failed ({}); showing the standard template.",
                                        provider->name(), e.what());
        return s.rendered_text + *s.provenance_note + "\n";
    }
}

json to_json(const DailySummary& s) {
    json metrics = json::array();
    for (const auto& m : s.metrics) {
        metrics.push_back({{"metric", to_string(m.metric)},
                           {"mean", m.mean},
                           {"min", m.min},
                           {"max", m.max},
                           {"count", m.count},
                           {"deviation_flag", m.deviation_flag},
                           {"peak_hourly_z", std::isfinite(m.peak_hourly_z) ? json(m.peak_hourly_z) : json(nullptr)},
                           {"peak_hour", m.peak_hour ? json(*m.peak_hour) : json(nullptr)}});
    }
    json symptoms = json::array();
    for (const auto& sym : s.symptoms)
        symptoms.push_back({{"symptom", sym.symptom}, {"label", sym.label}, {"t", sym.t}, {"tag", to_string(sym.tag)}});
    return {{"patient_id", s.patient_id},
            {"date", s.date},
            {"metrics", std::move(metrics)},
            {"symptoms", std::move(symptoms)},
            {"alert_count", s.alert_count},
            {"note_hooks", s.note_hooks},
            {"rendered_text", s.rendered_text},
            {"provider", s.provider},
            {"generated_text", s.generated_text ? json(*s.generated_text) : json(nullptr)},
            {"provenance_note", s.provenance_note ? json(*s.provenance_note) : json(nullptr)}};
}

DailySummary summary_from_json(const json& j) {
    DailySummary s;
    try {
        s.patient_id = j.at("patient_id").get<std::string>();
        s.date = j.at("date").get<std::string>();
        for (const auto& m : j.at("metrics")) {
            MetricStats ms;
            const auto metric = parse_metric(m.at("metric").get<std::string>());
            if (!metric) throw ValidationError("summary has an unknown metric", {"metrics.metric"});
            ms.metric = *metric;
            ms.mean = m.at("mean").get<double>();
            ms.min = m.at("min").get<double>();
            ms.max = m.at("max").get<double>();
            ms.count = m.at("count").get<std::size_t>();
            ms.deviation_flag = m.at("deviation_flag").get<bool>();
            const auto& z = m.at("peak_hourly_z");
            ms.peak_hourly_z = z.is_null() ? std::numeric_limits<double>::infinity() : z.get<double>();
            if (!m.at("peak_hour").is_null()) ms.peak_hour = m.at("peak_hour").get<EpochMs>();
            s.metrics.push_back(ms);
        }
        for (const auto& sym : j.at("symptoms")) {
            SymptomMention sm;
            sm.symptom = sym.at("symptom").get<std::string>();
            sm.label = sym.at("label").get<std::string>();
            sm.t = sym.at("t").get<EpochMs>();
            const auto tag = sym.at("tag").get<std::string>();
            sm.tag = tag == "red_flag" ? TurnTag::red_flag : tag == "abnormal" ? TurnTag::abnormal : TurnTag::normal;
            s.symptoms.push_back(sm);
        }
        s.alert_count = j.at("alert_count").get<std::size_t>();
        s.note_hooks = j.at("note_hooks").get<std::vector<std::string>>();
        s.rendered_text = j.at("rendered_text").get<std::string>();
        s.provider = j.at("provider").get<std::string>();
        if (!j.at("generated_text").is_null()) s.generated_text = j.at("generated_text").get<std::string>();
        if (!j.at("provenance_note").is_null()) s.provenance_note = j.at("provenance_note").get<std::string>();
    } catch (const json::exception& e) {
        throw ValidationError(fmt::format("malformed summary: {}", e.what()));
    }
    return s;
}

} // namespace cardio::summary
