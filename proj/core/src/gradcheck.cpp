#include "s2s/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace s2s {

Gradients analytic_gradients(const ModelParams& m, const Batch& batch) {
    const std::size_t count = batch.mask_count();
    if (count == 0) fail(ErrorKind::degenerate_batch, "batch has no target positions");
    auto grads = zeros_like(m);
    forward_backward(m, batch, &grads, 1.0 / static_cast<double>(count));
    return grads;
}

GradCheckReport finite_diff_grad_check(const ModelParams& m, std::span<const EncodedPair> pairs, float eps,
                                       const GradientFn& analytic) {
    if (!(eps > 0.0f)) fail(ErrorKind::argument, "finite-difference step must be positive");
    const Batch batch = collate(pairs);
    const Gradients grads = analytic(m, batch);

    ModelParams probe = m;
    std::vector<Tensor2*> probe_tensors;
    probe.visit([&](std::string_view, Tensor2& t) { probe_tensors.push_back(&t); });
    std::vector<const Mat*> grad_tensors;
    grads.visit([&](std::string_view, const Mat& g) { grad_tensors.push_back(&g); });

    GradCheckReport report;
    report.worst_param_index = {std::string(tensor_names[0]), 0};
    bool have_worst = false;
    for (std::size_t k = 0; k < tensor_names.size(); ++k) {
        const std::string name(tensor_names[k]);
        Tensor2& tensor = *probe_tensors[k];
        const Mat& g = *grad_tensors[k];
        double tensor_max = 0.0;
        for (std::size_t i = 0; i < tensor.size(); ++i) {
            const float original = tensor[i];
            const float up = original + eps;
            const float down = original - eps;
            tensor[i] = up;
            const double loss_up = batch_loss(probe, batch);
            tensor[i] = down;
            const double loss_down = batch_loss(probe, batch);
            tensor[i] = original;
            if (!std::isfinite(loss_up) || !std::isfinite(loss_down))
                fail(ErrorKind::numeric, "non-finite loss while perturbing " + name + "[" + std::to_string(i) + "]");
            // Divide by the step actually taken in float, which can differ from 2*eps by rounding.
            const double g_fd = (loss_up - loss_down) / (static_cast<double>(up) - static_cast<double>(down));
            const double g_a = g[i];
            const double rel = std::abs(g_a - g_fd) / std::max(1e-8, std::abs(g_a) + std::abs(g_fd));
            tensor_max = std::max(tensor_max, rel);
            if (!have_worst || rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param_index = {name, i};
                have_worst = true;
            }
            ++report.parameters_checked;
        }
        report.per_param_errs[name] = tensor_max;
    }
    return report;
}

} // namespace s2s
