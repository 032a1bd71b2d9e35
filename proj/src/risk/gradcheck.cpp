#include "cardio/risk/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace cardio::risk {

std::vector<TensorCheck> check_gradients(std::span<const Example> batch, const ModelParams& params,
                                         const ModelConfig& cfg, double eps, double floor) {
    ModelParams analytic;
    wcph_loss(batch, params, cfg, &analytic);

    std::vector<Eigen::Map<Eigen::VectorXd>> grads;
    for_each_tensor(analytic, [&](const std::string&, auto& t) { grads.emplace_back(t.data(), t.size()); });

    ModelParams probe = params;
    std::vector<TensorCheck> out;
    std::size_t idx = 0;
    for_each_tensor(probe, [&](const std::string& name, auto& t) {
        TensorCheck c{name, static_cast<std::size_t>(t.size()), 0.0, 0.0};
        const auto& g = grads[idx++];
        double* data = t.data();
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            const double saved = data[i];
            data[i] = saved + eps;
            const double up = wcph_loss(batch, probe, cfg);
            data[i] = saved - eps;
            const double down = wcph_loss(batch, probe, cfg);
            data[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double abs_err = std::abs(g(i) - numeric);
            const double denom = std::max({std::abs(g(i)), std::abs(numeric), floor});
            c.max_abs_error = std::max(c.max_abs_error, abs_err);
            c.max_rel_error = std::max(c.max_rel_error, abs_err / denom);
        }
        out.push_back(std::move(c));
    });
    return out;
}

double max_rel_error(const std::vector<TensorCheck>& checks) {
    double m = 0.0;
    for (const auto& c : checks) m = std::max(m, c.max_rel_error);
    return m;
}

} // namespace cardio::risk
