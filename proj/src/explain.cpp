#include "cardio/explain.hpp"

#include <fstream>

#include <fmt/format.h>

#include "json.hpp"

namespace cardio::explain {

void assign_shares(std::vector<GroupAttribution>& attributions) {
    double total = 0.0;
    for (const auto& a : attributions) total += std::abs(a.phi);
    for (auto& a : attributions) a.share = total > 0.0 ? std::abs(a.phi) / total : 0.0;
}

void sort_by_magnitude(std::vector<GroupAttribution>& attributions) {
    std::stable_sort(attributions.begin(), attributions.end(), [](const auto& a, const auto& b) {
        const double ma = std::abs(a.phi), mb = std::abs(b.phi);
        if (ma != mb) return ma > mb;
        return a.label < b.label;
    });
}

void TierThresholds::validate() const {
    if (!(monitor > 0.0 && monitor < refer && refer <= 1.0))
        throw ConfigError("tier thresholds must satisfy 0 < monitor < refer <= 1");
}

Tier tier_for(double score, const TierThresholds& t) {
    if (score >= t.refer) return Tier::refer;
    if (score >= t.monitor) return Tier::monitor;
    return Tier::routine;
}

void ExplainConfig::validate() const {
    thresholds.validate();
    if (!(horizon_days > 0.0)) throw ConfigError("horizon_days must be > 0");
    if (method != "exact" && method != "sampled") throw ConfigError("method must be 'exact' or 'sampled'");
    if (n_permutations < 10) throw ConfigError("n_permutations must be >= 10");
}

ExplainConfig load_explain_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError(fmt::format("cannot read explain config '{}'", file.string()));
    ExplainConfig c;
    try {
        const auto j = nlohmann::json::parse(in);
        c.thresholds.monitor = j.value("monitor_threshold", c.thresholds.monitor);
        c.thresholds.refer = j.value("refer_threshold", c.thresholds.refer);
        c.horizon_days = j.value("horizon_days", c.horizon_days);
        c.method = j.value("method", c.method);
        c.n_permutations = j.value("n_permutations", c.n_permutations);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("malformed explain config '{}': {}", file.string(), e.what()));
    }
    c.validate();
    return c;
}

std::string format_percent(double fraction) { return fmt::format("{:.0f}%", fraction * 100.0); }

namespace {

std::string tier_action(Tier t) {
    switch (t) {
    case Tier::routine: return "Continue routine monitoring.";
    case Tier::monitor: return "Increase monitoring and review at the next visit.";
    case Tier::refer: return "Consider cardiology referral.";
    }
    return {};
}

} // namespace

ExplanationReport render_explanation(double score, double horizon_days, std::vector<GroupAttribution> attributions,
                                     const TierThresholds& thresholds) {
    thresholds.validate();
    ExplanationReport r;
    r.score = score;
    r.horizon_days = horizon_days;
    r.tier = tier_for(score, thresholds);
    sort_by_magnitude(attributions);
    r.attributions = std::move(attributions);

    std::string text;
    if (r.tier == Tier::routine)
        text = fmt::format("No elevated cardiotoxicity risk: estimated {} chance of an event within {:g} days.",
                           format_percent(score), horizon_days);
    else
        text = fmt::format("{} cardiotoxicity risk: estimated {} chance of an event within {:g} days.",
                           r.tier == Tier::refer ? "High" : "Elevated", format_percent(score), horizon_days);

    std::vector<std::string> parts;
    for (const auto& a : r.attributions) {
        if (parts.size() == 3 || a.share <= 0.0) break;
        parts.push_back(fmt::format("{} ({})", a.label, format_percent(a.share)));
    }
    if (!parts.empty()) text += fmt::format(" Main contributing factors: {}.", fmt::join(parts, ", "));
    text += " Recommendation: " + std::string(to_string(r.tier)) + ". " + tier_action(r.tier);
    r.narrative = std::move(text);
    return r;
}

std::vector<AttributionRecord> to_records(const std::vector<GroupAttribution>& attributions) {
    std::vector<AttributionRecord> out;
    for (const auto& a : attributions) out.push_back({a.group_id, a.label, a.phi, a.share});
    return out;
}

} // namespace cardio::explain
