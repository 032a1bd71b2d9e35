#include "cardio/risk/screening.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "cardio/risk/model.hpp"

namespace cardio::risk {

namespace {

Eigen::VectorXd sigmoid(const Eigen::VectorXd& z) {
    return z.unaryExpr([](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); });
}

// Largest eigenvalue of x^T x / n by power iteration, with a 5 % margin.
double gram_spectral_bound(const Eigen::MatrixXd& x) {
    const double n = static_cast<double>(x.rows());
    Eigen::VectorXd v = Eigen::VectorXd::Ones(x.cols() + 1).normalized();
    double lambda = 0.0;
    for (int it = 0; it < 200; ++it) {
        Eigen::VectorXd xv = x * v.head(x.cols()) + Eigen::VectorXd::Constant(x.rows(), v(x.cols()));
        Eigen::VectorXd w(x.cols() + 1);
        w.head(x.cols()) = x.transpose() * xv / n;
        w(x.cols()) = xv.sum() / n;
        const double next = w.norm();
        if (next == 0.0) return 0.0;
        v = w / next;
        if (std::abs(next - lambda) <= 1e-10 * next) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    return lambda * 1.05;
}

} // namespace

LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double l2, double tol, int max_iter) {
    if (x.rows() == 0 || x.rows() != y.size()) throw ContractError("logistic fit needs matching non-empty x and y");
    const double pos = y.sum();
    if (pos <= 0.0 || pos >= static_cast<double>(y.size()))
        throw DegenerateLabelError(fmt::format("labels are all one class ({} of {} positive)", pos, y.size()));
    if (l2 < 0.0) throw ConfigError("l2 must be >= 0");

    const double n = static_cast<double>(x.rows());
    const double step = 1.0 / (0.25 * gram_spectral_bound(x) + l2);

    LogisticFit fit;
    fit.coef = Eigen::VectorXd::Zero(x.cols());
    fit.intercept = std::log(pos / (n - pos));
    for (fit.iterations = 0; fit.iterations < max_iter; ++fit.iterations) {
        const Eigen::VectorXd r = sigmoid((x * fit.coef).array() + fit.intercept) - y;
        const Eigen::VectorXd g = x.transpose() * r / n + l2 * fit.coef;
        const double g0 = r.sum() / n;
        fit.grad_norm = std::sqrt(g.squaredNorm() + g0 * g0);
        if (fit.grad_norm < tol) {
            fit.converged = true;
            break;
        }
        fit.coef -= step * g;
        fit.intercept -= step * g0;
    }
    return fit;
}

Eigen::VectorXd wald_z(const Eigen::MatrixXd& x, const LogisticFit& fit, double l2) {
    const auto n = x.rows();
    const auto p = x.cols();
    Eigen::MatrixXd xa(n, p + 1);
    xa.leftCols(p) = x;
    xa.col(p).setOnes();
    const Eigen::VectorXd mu = sigmoid((x * fit.coef).array() + fit.intercept);
    const Eigen::VectorXd w = mu.array() * (1.0 - mu.array());
    Eigen::MatrixXd h = xa.transpose() * w.asDiagonal() * xa / static_cast<double>(n);
    h.diagonal().head(p).array() += l2;
    const Eigen::MatrixXd cov = h.ldlt().solve(Eigen::MatrixXd::Identity(p + 1, p + 1)) / static_cast<double>(n);
    Eigen::VectorXd z(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double var = cov(j, j);
        z(j) = var > 0.0 ? fit.coef(j) / std::sqrt(var) : 0.0;
    }
    return z;
}

std::vector<RiskFactor> screen_risk_factors(const std::vector<sim::PatientRecordSet>& patients,
                                            const ScreeningConfig& cfg) {
    if (cfg.top_k < 1) throw ConfigError("top_k must be >= 1");
    if (patients.empty()) throw ContractError("screening needs at least one patient");

    std::map<std::string, Eigen::Index> columns;
    for (const auto& rec : patients)
        for (const auto& v : rec.visits)
            for (const auto* list : {&v.codes, &v.procedures, &v.medications})
                for (const auto& t : *list) columns.emplace(t, 0);
    Eigen::Index next = 0;
    for (auto& [token, col] : columns) col = next++;

    const StaticLayout layout = make_layout({});
    const auto n_tokens = static_cast<Eigen::Index>(columns.size());
    const auto n_static = static_cast<Eigen::Index>(layout.dim());
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(patients.size()), n_tokens + n_static);
    Eigen::VectorXd y(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const auto& rec = patients[static_cast<std::size_t>(i)];
        for (const auto& v : rec.visits)
            for (const auto* list : {&v.codes, &v.procedures, &v.medications})
                for (const auto& t : *list) x(i, columns.at(t)) += 1.0;
        x.row(i).tail(n_static) = static_features(make_input(rec), layout).transpose();
        y(i) = rec.outcome.observed && rec.outcome.event_time <= cfg.horizon_days ? 1.0 : 0.0;
    }

    const auto fit = fit_logistic(x, y, cfg.l2);
    const Eigen::VectorXd z = wald_z(x, fit, cfg.l2);

    std::vector<RiskFactor> found;
    for (const auto& [token, col] : columns) {
        const double c = fit.coef(col);
        if (c > 0.0 && z(col) >= cfg.min_z) found.push_back({token, c, z(col)});
    }
    std::stable_sort(found.begin(), found.end(),
                     [](const RiskFactor& a, const RiskFactor& b) { return a.coefficient > b.coefficient; });
    if (found.size() > static_cast<std::size_t>(cfg.top_k)) found.resize(static_cast<std::size_t>(cfg.top_k));
    return found;
}

} // namespace cardio::risk
