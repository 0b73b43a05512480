#include "ptrlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ptrlab {
namespace {

Tensor objective_grad_logits(const BatchTrace& trace, std::span<const std::size_t> labels, CheckObjective objective)
{
    const double scale = 1.0 / static_cast<double>(labels.size());
    Tensor g;
    if (objective == CheckObjective::CrossEntropy) {
        g = softmax_cross_entropy(trace.logits(), labels).grad_logits;
    } else {
        g = trace.logits();
        for (std::size_t b = 0; b < labels.size(); ++b)
            g.at(b, labels[b]) -= 1.0;
    }
    for (double& v : g.values())
        v *= scale;
    return g;
}

} // namespace

double gradient_relative_error(double analytic, double numeric, double floor)
{
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

double objective_value(const BatchTrace& trace, std::span<const std::size_t> labels, CheckObjective objective)
{
    double total = 0.0;
    if (objective == CheckObjective::CrossEntropy) {
        for (double l : softmax_cross_entropy(trace.logits(), labels).loss)
            total += l;
    } else {
        const Tensor& logits = trace.logits();
        for (std::size_t b = 0; b < labels.size(); ++b)
            for (std::size_t k = 0; k < logits.dim(1); ++k) {
                const double d = logits.at(b, k) - (k == labels[b] ? 1.0 : 0.0);
                total += 0.5 * d * d;
            }
    }
    return total / static_cast<double>(labels.size());
}

Gradients objective_gradients(const Network& net, const NetworkState& state, const BatchTrace& trace,
                              std::span<const std::size_t> labels, CheckObjective objective)
{
    const Tensor g_logits = objective_grad_logits(trace, labels, objective);
    HeadBackward head = head_backward(net, state, trace, g_logits);
    Gradients grads = backward_from_rep(net, state, trace, head.grad_rep);
    grads[net.head_index()] = std::move(head.grads);
    return grads;
}

GradCheckResult finite_difference_check(const Network& net, const NetworkState& state, const Tensor& batch,
                                        std::span<const std::size_t> labels, double epsilon,
                                        CheckObjective objective, std::optional<std::uint64_t> dropout_seed)
{
    if (!(epsilon > 0.0 && epsilon <= 1e-2))
        throw std::invalid_argument("finite_difference_check: epsilon must lie in (0, 1e-2]");

    std::vector<Tensor> masks(net.layer_count());
    if (dropout_seed) {
        Rng rng = make_rng(*dropout_seed, Stream::Dropout);
        masks = forward(net, state, batch, Mode::Train, rng).masks;
    }
    const BatchTrace trace = forward_with_masks(net, state, batch, masks);
    const Gradients analytic = objective_gradients(net, state, trace, labels, objective);

    NetworkState probe = state;
    auto loss_at = [&]() { return objective_value(forward_with_masks(net, probe, batch, masks), labels, objective); };

    GradCheckResult result;
    for (std::size_t layer = 0; layer < net.layer_count(); ++layer) {
        if (!probe.layers[layer].learnable())
            continue;
        auto& params = probe.layers[layer];
        std::size_t offset = 0;
        for (auto [values, grad] : {std::pair{&params.weights, &analytic[layer].weights},
                                    std::pair{&params.biases, &analytic[layer].biases}}) {
            for (std::size_t i = 0; i < values->size(); ++i) {
                const double original = (*values)[i];
                (*values)[i] = original + epsilon;
                const double plus = loss_at();
                (*values)[i] = original - epsilon;
                const double minus = loss_at();
                (*values)[i] = original;
                const double numeric = (plus - minus) / (2.0 * epsilon);
                const double err = gradient_relative_error((*grad)[i], numeric);
                ++result.parameters_checked;
                if (err > result.max_relative_error) {
                    result.max_relative_error = err;
                    result.worst_layer = layer;
                    result.worst_index = offset + i;
                }
            }
            offset += values->size();
        }
    }
    return result;
}

} // namespace ptrlab
