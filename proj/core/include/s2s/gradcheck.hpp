#pragma once

#include "s2s/model.hpp"

#include <functional>
#include <map>
#include <span>
#include <string>

namespace s2s {

struct ParamIndex {
    std::string name;
    std::size_t index = 0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    ParamIndex worst_param_index;
    std::map<std::string, double> per_param_errs;
    std::size_t parameters_checked = 0;
};

/// Gradient of the batch mean loss, as produced by backpropagation.
Gradients analytic_gradients(const ModelParams& m, const Batch& batch);

using GradientFn = std::function<Gradients(const ModelParams&, const Batch&)>;

/// Compares `analytic` against central differences for every parameter:
///   rel_err = |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|)
/// O(parameter count) loss evaluations, so keep the model tiny.
GradCheckReport finite_diff_grad_check(const ModelParams& m, std::span<const EncodedPair> pairs, float eps = 1e-3f,
                                       const GradientFn& analytic = analytic_gradients);

} // namespace s2s
