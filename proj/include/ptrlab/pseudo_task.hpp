#pragma once

#include "ptrlab/rng.hpp"
#include "ptrlab/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ptrlab {

enum class RegressionKind {
    L2,          // 1/2 sum (rep - t)^2
    SmoothL1,    // sum h(rep - t), h(x) = x^2/2 if |x| < 1 else |x| - 1/2
    FeatureNorm, // L2 toward a constant zero target
};

std::string to_string(RegressionKind kind);
RegressionKind regression_kind_from_string(const std::string& name); // "L2", "SML1", "FNP"

/// Pseudo-task settings. An empty `loss_kind` disables the pseudo-task and
/// training reduces to plain fine-tuning.
struct PtrConfig {
    double ratio = 3.0;          // R: target ratio of CE to weighted pseudo-task gradient norm
    double target_mean = 1.0;    // m: pseudo-targets are Uniform[0, 2m)
    double gate_threshold = 1.0; // T: pseudo-task starts once mean epoch CE < T
    std::optional<RegressionKind> loss_kind;
    double epsilon_norm = 1e-12;

    void validate() const;
};

/// batch_size x rep_dim tensor of i.i.d. Uniform[0, 2m) draws.
Tensor generate_pseudo_targets(std::size_t batch_size, std::size_t rep_dim, double target_mean, Rng& rng);

struct RegressionLoss {
    std::vector<double> loss; // per instance
    Tensor grad_rep;          // per instance d loss / d rep
};

RegressionLoss regression_loss(const Tensor& rep, const Tensor& targets, RegressionKind kind);

/// Per-instance gradient of the CE loss at the representation through a
/// dense head: W^T (softmax - one_hot). `head_weights` is classes x rep_dim.
Tensor grad_ce_at_rep(const Tensor& head_weights, const Tensor& grad_logits);

struct BalanceRecord {
    double g_ce_mean = 0.0;
    double g_ptr_mean = 0.0;
    double w = 0.0;
    bool gated_on = false;
    std::vector<double> per_instance_g_ce;
    std::vector<double> per_instance_g_ptr;
};

/// Per-instance L2 norms along the representation axis.
std::vector<double> row_norms(const Tensor& grads);

/// Dynamic weight w = mean G_ce / (mean G_ptr * R). When the gate is closed
/// or mean G_ptr < epsilon_norm, w is 0 and `gated_on` is reported false.
BalanceRecord balance(const Tensor& grad_rep_ce, const Tensor& grad_rep_ptr, const PtrConfig& config,
                      bool gated_on);

/// Opens once a completed epoch's mean training CE falls below the
/// threshold and stays open for the rest of the run.
class Gate {
public:
    explicit Gate(double threshold);

    /// Feeds the previous epoch's mean CE (empty before the first epoch) and
    /// returns whether the pseudo-task is active for the coming epoch.
    bool observe(std::optional<double> prev_epoch_mean_ce);
    bool is_open() const noexcept { return open_; }

private:
    double threshold_;
    bool open_ = false;
};

} // namespace ptrlab
