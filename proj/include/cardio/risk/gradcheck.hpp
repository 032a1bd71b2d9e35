#pragma once

// Central finite-difference check of the hand-written gradients.

#include <span>
#include <string>
#include <vector>

#include "cardio/risk/model.hpp"

namespace cardio::risk {

struct TensorCheck {
    std::string name;
    std::size_t elements = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
};

/// Per element: |analytic - numeric| / max(|analytic|, |numeric|, floor).
/// The floor keeps elements whose true gradient is zero from dividing noise
/// by noise.
std::vector<TensorCheck> check_gradients(std::span<const Example> batch, const ModelParams& params,
                                         const ModelConfig& cfg, double eps = 1e-5, double floor = 1e-6);

double max_rel_error(const std::vector<TensorCheck>& checks);

} // namespace cardio::risk
