#pragma once

// Shapley attribution over feature groups and the tiered plain-language
// explanation.
//
// A coalition keeps its groups at the patient's values and masks every other
// group to the reference. phi_i is the average marginal contribution of group
// i over coalitions (exact) or over sampled orderings (antithetic pairs).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "cardio/core.hpp"
#include "cardio/records.hpp"

namespace cardio::explain {

class BudgetError : public Error {
public:
    using Error::Error;
};

inline constexpr std::size_t kMaxExactGroups = 12;

template <class Input>
struct FeatureGroup {
    std::string group_id;
    std::string label;
    /// Replaces this group's part of `x` with the reference's.
    std::function<void(Input& x, const Input& reference)> mask;
};

struct GroupAttribution {
    std::string group_id;
    std::string label;
    double phi = 0.0;
    double share = 0.0;
    double std_error = 0.0; ///< 0 for exact attribution
    friend bool operator==(const GroupAttribution&, const GroupAttribution&) = default;
};

/// share_i = |phi_i| / sum |phi|; all zero when every phi is zero.
void assign_shares(std::vector<GroupAttribution>& attributions);

/// |phi| descending, ties by label.
void sort_by_magnitude(std::vector<GroupAttribution>& attributions);

namespace detail {

template <class Input>
Input compose(const Input& x, const Input& reference, const std::vector<FeatureGroup<Input>>& groups,
              std::uint32_t kept) {
    Input out = x;
    for (std::size_t g = 0; g < groups.size(); ++g)
        if (!(kept & (1u << g))) groups[g].mask(out, reference);
    return out;
}

template <class Input>
void check_groups(const std::vector<FeatureGroup<Input>>& groups) {
    for (std::size_t i = 0; i < groups.size(); ++i)
        for (std::size_t j = i + 1; j < groups.size(); ++j)
            if (groups[i].label == groups[j].label || groups[i].group_id == groups[j].group_id)
                throw ConfigError("feature group ids and labels must be unique: '" + groups[i].label + "'");
}

inline std::vector<GroupAttribution> finish(const std::vector<std::string>& ids,
                                            const std::vector<std::string>& labels, const std::vector<double>& phi,
                                            const std::vector<double>& se) {
    std::vector<GroupAttribution> out;
    for (std::size_t i = 0; i < ids.size(); ++i) out.push_back({ids[i], labels[i], phi[i], 0.0, se[i]});
    assign_shares(out);
    return out;
}

} // namespace detail

/// Enumerates all 2^n coalitions. Results are in group order. Throws
/// BudgetError for more than 12 groups.
template <class Input, class ValueFn>
std::vector<GroupAttribution> shapley_exact(ValueFn&& value_fn, const Input& x, const Input& reference,
                                            const std::vector<FeatureGroup<Input>>& groups) {
    const std::size_t n = groups.size();
    if (n > kMaxExactGroups)
        throw BudgetError("exact Shapley supports at most 12 groups; use shapley_sampled for " + std::to_string(n));
    detail::check_groups(groups);
    const std::uint32_t full = (1u << n);
    std::vector<double> v(full);
    for (std::uint32_t s = 0; s < full; ++s) v[s] = static_cast<double>(value_fn(detail::compose(x, reference, groups, s)));

    // weight(|S|) = |S|! (n - |S| - 1)! / n!
    std::vector<double> weight(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        double w = 1.0 / static_cast<double>(n);
        // 1 / (n * C(n-1, k))
        for (std::size_t i = 1; i <= k; ++i) w *= static_cast<double>(i) / static_cast<double>(n - i);
        weight[k] = w;
    }

    std::vector<double> phi(n, 0.0), se(n, 0.0);
    std::vector<std::string> ids, labels;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t bit = 1u << i;
        double acc = 0.0;
        for (std::uint32_t s = 0; s < full; ++s) {
            if (s & bit) continue;
            acc += weight[static_cast<std::size_t>(std::popcount(s))] * (v[s | bit] - v[s]);
        }
        phi[i] = acc;
        ids.push_back(groups[i].group_id);
        labels.push_back(groups[i].label);
    }
    return detail::finish(ids, labels, phi, se);
}

/// Antithetic permutation sampling: each drawn ordering is paired with its
/// reverse, and the pair average is one Monte-Carlo sample. The standard
/// error is the sample standard deviation of the pair averages over
/// sqrt(pairs). Deterministic by seed. Requires n_permutations >= 10.
template <class Input, class ValueFn>
std::vector<GroupAttribution> shapley_sampled(ValueFn&& value_fn, const Input& x, const Input& reference,
                                              const std::vector<FeatureGroup<Input>>& groups,
                                              std::size_t n_permutations, std::uint64_t seed) {
    if (n_permutations < 10) throw ContractError("sampled Shapley needs at least 10 permutations");
    detail::check_groups(groups);
    if (groups.size() > 32) throw BudgetError("sampled Shapley supports at most 32 groups");
    const std::size_t n = groups.size();
    const std::size_t pairs = (n_permutations + 1) / 2;
    std::mt19937_64 rng(mix_seed(seed));

    std::vector<double> sum(n, 0.0), sum_sq(n, 0.0);
    std::vector<std::size_t> order(n);
    std::vector<double> contrib(n), pair_avg(n);
    const double v_empty = static_cast<double>(value_fn(detail::compose(x, reference, groups, 0u)));

    auto walk = [&](const std::vector<std::size_t>& perm) {
        std::uint32_t kept = 0;
        double prev = v_empty;
        for (auto g : perm) {
            kept |= (1u << g);
            const double cur = static_cast<double>(value_fn(detail::compose(x, reference, groups, kept)));
            contrib[g] = cur - prev;
            prev = cur;
        }
    };

    for (std::size_t p = 0; p < pairs; ++p) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        walk(order);
        pair_avg = contrib;
        std::reverse(order.begin(), order.end());
        walk(order);
        for (std::size_t g = 0; g < n; ++g) {
            const double y = 0.5 * (pair_avg[g] + contrib[g]);
            sum[g] += y;
            sum_sq[g] += y * y;
        }
    }

    std::vector<double> phi(n), se(n);
    std::vector<std::string> ids, labels;
    const double k = static_cast<double>(pairs);
    for (std::size_t g = 0; g < n; ++g) {
        phi[g] = sum[g] / k;
        const double var = pairs > 1 ? std::max(0.0, (sum_sq[g] - k * phi[g] * phi[g]) / (k - 1.0)) : 0.0;
        se[g] = std::sqrt(var / k);
        ids.push_back(groups[g].group_id);
        labels.push_back(groups[g].label);
    }
    return detail::finish(ids, labels, phi, se);
}

// ---------------------------------------------------------------------------
// Rendering

struct TierThresholds {
    double monitor = 0.3;
    double refer = 0.6;
    void validate() const;
};

Tier tier_for(double score, const TierThresholds& t);

struct ExplainConfig {
    TierThresholds thresholds;
    double horizon_days = 90.0;
    /// "exact" or "sampled".
    std::string method = "exact";
    std::size_t n_permutations = 2000;
    std::uint64_t seed = 0;
    void validate() const;
};

ExplainConfig load_explain_config(const std::filesystem::path& file);

struct ExplanationReport {
    double score = 0.0;
    double horizon_days = 90.0;
    Tier tier = Tier::routine;
    std::vector<GroupAttribution> attributions; ///< |phi| descending
    std::string narrative;
};

/// Names the top three groups with percentage shares, the score, the horizon,
/// and the tier action. Deterministic.
ExplanationReport render_explanation(double score, double horizon_days, std::vector<GroupAttribution> attributions,
                                     const TierThresholds& thresholds);

std::string format_percent(double fraction);

std::vector<AttributionRecord> to_records(const std::vector<GroupAttribution>& attributions);

} // namespace cardio::explain
