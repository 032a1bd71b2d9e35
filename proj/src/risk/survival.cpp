#include "cardio/risk/survival.hpp"

#include <fmt/format.h>

namespace cardio::risk {

namespace {

void require_non_negative(double t) {
    if (!(t >= 0.0)) throw ContractError(fmt::format("survival time must be >= 0, got {}", t));
}

} // namespace

double cumulative_hazard(const WeibullCoxHead& head, double s, double t) {
    require_non_negative(t);
    if (t == 0.0) return 0.0;
    return std::pow(t / head.scale(), head.shape()) * std::exp(s);
}

double hazard(const WeibullCoxHead& head, double s, double t) {
    require_non_negative(t);
    const double k = head.shape();
    const double lam = head.scale();
    return (k / lam) * std::pow(t / lam, k - 1.0) * std::exp(s);
}

double survival(const WeibullCoxHead& head, double s, double t) {
    require_non_negative(t);
    if (t == 0.0) return 1.0;
    return std::exp(-cumulative_hazard(head, s, t));
}

NllTerms weibull_nll(const WeibullCoxHead& head, double s, double t, bool observed) {
    if (!(t > 0.0)) throw ContractError(fmt::format("event time must be > 0, got {}", t));
    const double k = head.shape();
    const double lam = head.scale();
    const double log_ratio = std::log(t / lam);
    const double cum = std::exp(k * log_ratio + s);
    const double delta = observed ? 1.0 : 0.0;

    NllTerms out;
    const double log_h = std::log(k) - std::log(lam) + (k - 1.0) * log_ratio + s;
    out.nll = -delta * log_h + cum;
    out.d_score = cum - delta;
    const double d_k = -delta * (1.0 / k + log_ratio) + cum * log_ratio;
    const double d_lam = (delta - cum) * k / lam;
    out.d_shape_raw = d_k * logistic(head.shape_raw);
    out.d_scale_raw = d_lam * logistic(head.scale_raw);
    return out;
}

} // namespace cardio::risk
