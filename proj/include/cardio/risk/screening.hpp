#pragma once

// Logistic screening of candidate risk factors.
//
// Features are per-token visit counts plus the static demographic/treatment
// block; the label is "event observed within the horizon". The fit is
// full-batch gradient descent on the L2-penalized mean log-loss (intercept
// unpenalized) with step 1/L, L the Lipschitz constant of the gradient.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "cardio/cohort.hpp"
#include "cardio/core.hpp"

namespace cardio::risk {

class DegenerateLabelError : public Error {
public:
    using Error::Error;
};

struct RiskFactor {
    std::string token;
    double coefficient = 0.0;
    double z = 0.0; ///< Wald statistic from the penalized Hessian
    friend bool operator==(const RiskFactor&, const RiskFactor&) = default;
};

struct LogisticFit {
    Eigen::VectorXd coef; ///< one per feature column
    double intercept = 0.0;
    int iterations = 0;
    double grad_norm = 0.0;
    bool converged = false;
};

/// Fits P(y=1|x) = sigmoid(x.coef + intercept). Rows of x are samples.
/// Throws DegenerateLabelError when y has one class only.
LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double l2, double tol = 1e-6,
                         int max_iter = 5000);

/// Wald z for each coefficient using the inverse penalized Hessian at the fit.
Eigen::VectorXd wald_z(const Eigen::MatrixXd& x, const LogisticFit& fit, double l2);

struct ScreeningConfig {
    double horizon_days = 90.0;
    int top_k = 5;
    double l2 = 1e-3;
    /// Minimum Wald z for a positive coefficient to count. 0 keeps every
    /// strictly positive coefficient.
    double min_z = 3.0;
};

/// Top-k tokens with strictly positive (and significant) coefficients,
/// coefficient-descending, ties by token order.
std::vector<RiskFactor> screen_risk_factors(const std::vector<sim::PatientRecordSet>& patients,
                                            const ScreeningConfig& cfg);

} // namespace cardio::risk
