#pragma once

#include "ptrlab/tensor.hpp"

#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ptrlab {

/// D x D accumulation of predicted probability vectors, one row per
/// ground-truth class.
struct ConfusionMass {
    Tensor matrix;
    std::size_t n_samples = 0;
};

ConfusionMass confusion_mass(const Tensor& probs, std::span<const std::size_t> labels);

/// Probability mass on the correct class, summed over samples.
double diag_mass(const ConfusionMass& c);
double offdiag_mass(const ConfusionMass& c);

/// Mean prediction entropy in bits; 0 log 0 = 0.
double mean_entropy_bits(const Tensor& probs);
double entropy_bits(std::span<const double> row);

/// First index of the row maximum.
std::size_t argmax(std::span<const double> row);
double accuracy(const Tensor& probs, std::span<const std::size_t> labels);

/// Sample indices grouped by which of two models is right. Model a is the
/// regularized one, model b the baseline.
struct RectificationReport {
    std::vector<std::size_t> true_rectified;  // a right, b wrong
    std::vector<std::size_t> false_rectified; // a wrong, b right
    std::vector<std::size_t> both_correct;
    std::vector<std::size_t> both_wrong;
};

RectificationReport rectification(const Tensor& probs_a, const Tensor& probs_b, std::span<const std::size_t> labels);

struct DiagnosticsReport {
    double s = 0.0;
    double s_prime = 0.0;
    double mean_entropy_bits = 0.0;
    double accuracy = 0.0;
    std::size_t n_samples = 0;
    std::optional<RectificationReport> rectification;
};

/// Full analysis of `probs`; with `baseline_probs` also compares the two.
DiagnosticsReport diagnose(const Tensor& probs, std::span<const std::size_t> labels,
                           const Tensor* baseline_probs = nullptr);

nlohmann::json to_json(const DiagnosticsReport& report);
std::string confusion_mass_csv(const ConfusionMass& c);

} // namespace ptrlab
