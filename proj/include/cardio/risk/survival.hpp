#pragma once

// Weibull Cox proportional hazards head.
//
//   h(t | x) = (k / lambda) (t / lambda)^(k - 1) exp(s)
//   S(t | x) = exp(-(t / lambda)^k exp(s))
//
// k and lambda are stored unconstrained and mapped through softplus.

#include <cmath>

#include "cardio/core.hpp"

namespace cardio::risk {

inline double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }
inline double softplus_inverse(double y) { return y + std::log(-std::expm1(-y)); }
inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct WeibullCoxHead {
    double shape_raw = 0.0;
    double scale_raw = 0.0;

    double shape() const { return softplus(shape_raw); }
    double scale() const { return softplus(scale_raw); }

    static WeibullCoxHead from_natural(double shape, double scale) {
        return {softplus_inverse(shape), softplus_inverse(scale)};
    }
};

/// Throws ContractError for t < 0.
double cumulative_hazard(const WeibullCoxHead& head, double s, double t);
double hazard(const WeibullCoxHead& head, double s, double t);
double survival(const WeibullCoxHead& head, double s, double t);

struct NllTerms {
    double nll = 0.0;
    double d_score = 0.0;     ///< d nll / d s
    double d_shape_raw = 0.0; ///< through softplus
    double d_scale_raw = 0.0;
};

/// -observed * log h(t) + (t / lambda)^k exp(s), with gradients. Requires t > 0.
NllTerms weibull_nll(const WeibullCoxHead& head, double s, double t, bool observed);

} // namespace cardio::risk
