#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "cardio/risk/screening.hpp"
#include "support.hpp"

using namespace cardio;
using namespace cardio::risk;

namespace {

sim::Cohort cohort(int n, std::uint64_t seed, double signal) {
    sim::CohortSpec spec;
    spec.n_patients = n;
    spec.seed = seed;
    spec.signal_strength = signal;
    return sim::generate_cohort(spec);
}

int planted_hits(const std::vector<RiskFactor>& found) {
    const auto& risky = sim::risky_code_tokens();
    return static_cast<int>(std::count_if(found.begin(), found.end(), [&](const RiskFactor& f) {
        return std::find(risky.begin(), risky.end(), f.token) != risky.end();
    }));
}

} // namespace

TEST(FitLogistic, SeparableFeatureGetsTheLargestCoefficient) {
    // Column 0 decides the label; columns 1-2 are noise.
    std::mt19937_64 rng(3);
    std::bernoulli_distribution coin(0.5);
    Eigen::MatrixXd x(80, 3);
    Eigen::VectorXd y(80);
    for (int i = 0; i < 80; ++i) {
        x(i, 0) = coin(rng);
        x(i, 1) = coin(rng);
        x(i, 2) = coin(rng);
        y(i) = x(i, 0);
    }
    const auto fit = fit_logistic(x, y, 1e-3);
    Eigen::Index best = 0;
    fit.coef.maxCoeff(&best);
    EXPECT_EQ(best, 0);
    EXPECT_GT(fit.coef(0), 0.0);
}

TEST(FitLogistic, StationaryPointOfPenalizedLoss) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    Eigen::MatrixXd x(200, 4);
    Eigen::VectorXd y(200);
    for (int i = 0; i < 200; ++i) {
        for (int j = 0; j < 4; ++j) x(i, j) = g(rng);
        const double eta = 0.8 * x(i, 0) - 0.5 * x(i, 2) - 0.3;
        y(i) = std::bernoulli_distribution(1.0 / (1.0 + std::exp(-eta)))(rng);
    }
    const double l2 = 1e-3;
    const auto fit = fit_logistic(x, y, l2);
    ASSERT_TRUE(fit.converged);
    const Eigen::VectorXd mu = ((x * fit.coef).array() + fit.intercept).unaryExpr([](double v) {
        return 1.0 / (1.0 + std::exp(-v));
    });
    const Eigen::VectorXd r = mu - y;
    EXPECT_LT((x.transpose() * r / 200.0 + l2 * fit.coef).norm(), 1e-6);
    EXPECT_LT(std::abs(r.mean()), 1e-6);
    EXPECT_GT(fit.coef(0), 0.0);
    EXPECT_LT(fit.coef(2), 0.0);
}

TEST(FitLogistic, OneClassLabelsAreDegenerate) {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Identity(4, 2);
    EXPECT_THROW(fit_logistic(x, Eigen::VectorXd::Zero(4), 1e-3), DegenerateLabelError);
    EXPECT_THROW(fit_logistic(x, Eigen::VectorXd::Ones(4), 1e-3), DegenerateLabelError);
    EXPECT_THROW(fit_logistic(x, Eigen::VectorXd::Ones(3), 1e-3), ContractError);
}

TEST(WaldZ, LargerForStrongerEffect) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> g;
    Eigen::MatrixXd x(400, 2);
    Eigen::VectorXd y(400);
    for (int i = 0; i < 400; ++i) {
        x(i, 0) = g(rng);
        x(i, 1) = g(rng);
        y(i) = std::bernoulli_distribution(1.0 / (1.0 + std::exp(-(1.5 * x(i, 0) + 0.05 * x(i, 1)))))(rng);
    }
    const auto fit = fit_logistic(x, y, 1e-3);
    const auto z = wald_z(x, fit, 1e-3);
    EXPECT_GT(z(0), 3.0);
    EXPECT_LT(std::abs(z(1)), z(0));
}

TEST(Screening, RecoversPlantedCodesOnStrongSignal) {
    const auto c = cohort(500, 42, sim::parse_signal_strength("high"));
    ScreeningConfig cfg;
    const auto found = screen_risk_factors(c.patients, cfg);
    ASSERT_LE(found.size(), 5u);
    EXPECT_GE(planted_hits(found), 4);
    for (std::size_t i = 1; i < found.size(); ++i) EXPECT_GE(found[i - 1].coefficient, found[i].coefficient);
    for (const auto& f : found) {
        EXPECT_GT(f.coefficient, 0.0);
        EXPECT_GE(f.z, cfg.min_z);
    }
}

TEST(Screening, RecoveryAcrossSeeds) {
    int good = 0;
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) good += planted_hits(screen_risk_factors(cohort(500, seed, 1.0).patients, {})) >= 4;
    EXPECT_GE(good, 4);
}

TEST(Screening, NullCohortFindsNothingSignificant) {
    for (std::uint64_t seed : {42, 7, 9}) {
        const auto found = screen_risk_factors(cohort(500, seed, 0.0).patients, {});
        EXPECT_LE(found.size(), 1u) << "seed " << seed;
    }
}

TEST(Screening, TopKAndErrors) {
    const auto c = cohort(300, 4, 1.0);
    ScreeningConfig cfg;
    cfg.top_k = 2;
    cfg.min_z = 0.0;
    EXPECT_EQ(screen_risk_factors(c.patients, cfg).size(), 2u);
    cfg.top_k = 0;
    EXPECT_THROW(screen_risk_factors(c.patients, cfg), ConfigError);
    EXPECT_THROW(screen_risk_factors({}, {}), ContractError);
}
