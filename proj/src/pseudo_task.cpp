#include "ptrlab/pseudo_task.hpp"

#include "ptrlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ptrlab {

std::string to_string(RegressionKind kind)
{
    switch (kind) {
    case RegressionKind::L2:
        return "L2";
    case RegressionKind::SmoothL1:
        return "SML1";
    case RegressionKind::FeatureNorm:
        return "FNP";
    }
    return "?";
}

RegressionKind regression_kind_from_string(const std::string& name)
{
    if (name == "L2")
        return RegressionKind::L2;
    if (name == "SML1")
        return RegressionKind::SmoothL1;
    if (name == "FNP")
        return RegressionKind::FeatureNorm;
    throw ConfigError("loss_kind", "expected one of L2, SML1, FNP, got '" + name + "'");
}

void PtrConfig::validate() const
{
    if (!(ratio > 0.0))
        throw ConfigError("ptr.ratio_R", "must be positive");
    if (!(target_mean >= 0.0))
        throw ConfigError("ptr.target_mean_m", "must be non-negative");
    if (!(gate_threshold > 0.0))
        throw ConfigError("ptr.gate_T", "must be positive");
    if (!(epsilon_norm > 0.0))
        throw ConfigError("ptr.epsilon_norm", "must be positive");
}

Tensor generate_pseudo_targets(std::size_t batch_size, std::size_t rep_dim, double target_mean, Rng& rng)
{
    if (target_mean < 0.0)
        throw std::invalid_argument("pseudo-targets: mean must be non-negative");
    const double upper = 2.0 * target_mean;
    Tensor targets({batch_size, rep_dim});
    for (double& t : targets.values()) {
        t = upper * uniform01(rng);
        if (t >= upper && upper > 0.0)
            t = std::nextafter(upper, 0.0);
    }
    return targets;
}

RegressionLoss regression_loss(const Tensor& rep, const Tensor& targets, RegressionKind kind)
{
    if (rep.rank() != 2)
        throw std::invalid_argument("regression loss: representation must be batch x dim, got "
                                    + shape_to_string(rep.shape()));
    if (kind != RegressionKind::FeatureNorm && targets.shape() != rep.shape())
        throw std::invalid_argument("regression loss: targets " + shape_to_string(targets.shape())
                                    + " do not match representation " + shape_to_string(rep.shape()));
    const std::size_t batch = rep.dim(0), dim = rep.dim(1);
    RegressionLoss out;
    out.loss.assign(batch, 0.0);
    out.grad_rep = Tensor(rep.shape());
    for (std::size_t b = 0; b < batch; ++b) {
        double sum = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            const double target = kind == RegressionKind::FeatureNorm ? 0.0 : targets.at(b, d);
            const double diff = rep.at(b, d) - target;
            if (kind == RegressionKind::SmoothL1) {
                const double a = std::abs(diff);
                sum += a < 1.0 ? 0.5 * diff * diff : a - 0.5;
                out.grad_rep.at(b, d) = std::clamp(diff, -1.0, 1.0);
            } else {
                sum += 0.5 * diff * diff;
                out.grad_rep.at(b, d) = diff;
            }
        }
        out.loss[b] = sum;
    }
    return out;
}

Tensor grad_ce_at_rep(const Tensor& head_weights, const Tensor& grad_logits)
{
    if (head_weights.rank() != 2 || grad_logits.rank() != 2 || grad_logits.dim(1) != head_weights.dim(0))
        throw std::invalid_argument("grad_ce_at_rep: head weights " + shape_to_string(head_weights.shape())
                                    + " incompatible with logit gradients " + shape_to_string(grad_logits.shape()));
    const std::size_t batch = grad_logits.dim(0), classes = head_weights.dim(0), dim = head_weights.dim(1);
    Tensor out({batch, dim});
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t k = 0; k < classes; ++k) {
            const double g = grad_logits.at(b, k);
            for (std::size_t d = 0; d < dim; ++d)
                out.at(b, d) += head_weights.at(k, d) * g;
        }
    return out;
}

std::vector<double> row_norms(const Tensor& grads)
{
    std::vector<double> norms(grads.dim(0));
    for (std::size_t b = 0; b < norms.size(); ++b)
        norms[b] = std::sqrt(squared_norm(grads.row(b)));
    return norms;
}

BalanceRecord balance(const Tensor& grad_rep_ce, const Tensor& grad_rep_ptr, const PtrConfig& config, bool gated_on)
{
    if (grad_rep_ce.rank() != 2 || grad_rep_ce.shape() != grad_rep_ptr.shape())
        throw std::invalid_argument("balance: gradient shapes " + shape_to_string(grad_rep_ce.shape()) + " and "
                                    + shape_to_string(grad_rep_ptr.shape()) + " differ");
    BalanceRecord record;
    record.per_instance_g_ce = row_norms(grad_rep_ce);
    record.per_instance_g_ptr = row_norms(grad_rep_ptr);
    const auto mean = [](const std::vector<double>& v) {
        return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    record.g_ce_mean = mean(record.per_instance_g_ce);
    record.g_ptr_mean = mean(record.per_instance_g_ptr);
    record.gated_on = gated_on && record.g_ptr_mean >= config.epsilon_norm;
    record.w = record.gated_on ? record.g_ce_mean / (record.g_ptr_mean * config.ratio) : 0.0;
    return record;
}

Gate::Gate(double threshold)
    : threshold_(threshold)
{
}

bool Gate::observe(std::optional<double> prev_epoch_mean_ce)
{
    if (!open_ && prev_epoch_mean_ce && *prev_epoch_mean_ce < threshold_)
        open_ = true;
    return open_;
}

} // namespace ptrlab
