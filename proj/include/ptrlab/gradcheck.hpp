#pragma once

#include "ptrlab/network.hpp"

#include <cstdint>
#include <optional>
#include <span>

namespace ptrlab {

enum class CheckObjective {
    CrossEntropy, // mean softmax cross-entropy over the batch
    SquaredError, // mean of 1/2 ||logits - one_hot(label)||^2
};

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t parameters_checked = 0;
    std::size_t worst_layer = 0;
    std::size_t worst_index = 0;
};

/// Mixed relative error used by the checker: |a - n| / max(|a|, |n|, floor).
/// The floor keeps parameters with vanishing gradients from amplifying
/// rounding noise.
double gradient_relative_error(double analytic, double numeric, double floor = 1e-3);

/// Compares analytic gradients of the objective against central differences
/// for every parameter. With `dropout_seed` set, dropout masks are drawn once
/// in train mode and frozen for all evaluations; otherwise eval mode is used.
GradCheckResult finite_difference_check(const Network& net, const NetworkState& state, const Tensor& batch,
                                        std::span<const std::size_t> labels, double epsilon,
                                        CheckObjective objective = CheckObjective::CrossEntropy,
                                        std::optional<std::uint64_t> dropout_seed = std::nullopt);

/// Analytic gradients of the same objective (mean over the batch).
Gradients objective_gradients(const Network& net, const NetworkState& state, const BatchTrace& trace,
                              std::span<const std::size_t> labels, CheckObjective objective);

double objective_value(const BatchTrace& trace, std::span<const std::size_t> labels, CheckObjective objective);

} // namespace ptrlab
