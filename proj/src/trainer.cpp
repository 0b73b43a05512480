#include "ptrlab/trainer.hpp"

#include "ptrlab/diagnostics.hpp"
#include "ptrlab/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <thread>
#include <tuple>

namespace ptrlab {
namespace {

constexpr std::size_t kEvalBatch = 256;

std::size_t eval_threads()
{
    std::size_t threads = std::max(1U, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("PTRLAB_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && cap > 0)
            threads = std::min(threads, static_cast<std::size_t>(cap));
    }
    return threads;
}

} // namespace

void OptimizerConfig::validate() const
{
    if (!(lr > 0.0))
        throw ConfigError("optimizer.lr", "must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw ConfigError("optimizer.momentum", "must lie in [0, 1)");
    if (!(weight_decay >= 0.0))
        throw ConfigError("optimizer.weight_decay", "must be non-negative");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0))
        throw ConfigError("optimizer.lr_decay_factor", "must lie in (0, 1)");
    if (batch_size == 0)
        throw ConfigError("optimizer.batch_size", "must be positive");
    for (std::size_t i = 0; i < lr_milestones.size(); ++i) {
        if (lr_milestones[i] < 1 || lr_milestones[i] > epochs)
            throw ConfigError("optimizer.lr_milestones", "milestones must lie in [1, epochs]");
        if (i > 0 && lr_milestones[i] <= lr_milestones[i - 1])
            throw ConfigError("optimizer.lr_milestones", "milestones must be strictly increasing");
    }
}

std::vector<std::size_t> default_milestones(std::size_t epochs)
{
    std::vector<std::size_t> out;
    for (double fraction : {0.6, 0.85}) {
        const auto m = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(epochs)));
        if (m >= 1 && m <= epochs && (out.empty() || m > out.back()))
            out.push_back(m);
    }
    return out;
}

double learning_rate_at(const OptimizerConfig& config, std::size_t epoch)
{
    double lr = config.lr;
    for (std::size_t m : config.lr_milestones)
        if (epoch >= m)
            lr *= config.lr_decay_factor;
    return lr;
}

RunRngs::RunRngs(std::uint64_t seed)
    : shuffle(make_rng(seed, Stream::Shuffle))
    , dropout(make_rng(seed, Stream::Dropout))
    , targets(make_rng(seed, Stream::Targets))
    , augment(make_rng(seed, Stream::Augment))
{
}

StepGradients compute_step_gradients(const Network& net, const NetworkState& state, const Tensor& batch,
                                     std::span<const std::size_t> labels, const PtrConfig& ptr, bool gate_on,
                                     RunRngs& rngs, std::size_t batch_index)
{
    const BatchTrace trace = forward(net, state, batch, Mode::Train, rngs.dropout);
    const CrossEntropy ce = softmax_cross_entropy(trace.logits(), labels);
    const std::size_t n = labels.size();
    const double inv_batch = 1.0 / static_cast<double>(n);

    StepGradients out;
    out.stats.size = n;
    for (std::size_t i = 0; i < n; ++i) {
        out.stats.ce_sum += ce.loss[i];
        out.stats.correct += argmax(trace.logits().row(i)) == labels[i] ? 1 : 0;
    }
    if (!std::isfinite(out.stats.ce_sum))
        throw TrainingError("non-finite cross-entropy loss at batch " + std::to_string(batch_index));

    // Head: CE path only.
    Tensor scaled_logit_grad = ce.grad_logits;
    for (double& g : scaled_logit_grad.values())
        g *= inv_batch;
    HeadBackward head = head_backward(net, state, trace, scaled_logit_grad);

    const Tensor ce_at_rep = grad_ce_at_rep(state.layers[net.head_index()].weights, ce.grad_logits);
    out.grad_at_rep = ce_at_rep;

    const bool apply_ptr = gate_on && ptr.loss_kind.has_value();
    if (apply_ptr) {
        const RegressionKind kind = *ptr.loss_kind;
        if (kind != RegressionKind::FeatureNorm)
            out.targets = generate_pseudo_targets(n, net.rep_dim(), ptr.target_mean, rngs.targets);
        const RegressionLoss reg = regression_loss(trace.rep(), out.targets, kind);
        out.balance = balance(ce_at_rep, reg.grad_rep, ptr, true);
        if (out.balance.gated_on) {
            for (std::size_t i = 0; i < n; ++i)
                out.stats.ptr_sum += reg.loss[i];
            if (!std::isfinite(out.stats.ptr_sum))
                throw TrainingError("non-finite pseudo-task loss at batch " + std::to_string(batch_index));
            const double w = out.balance.w;
            for (std::size_t i = 0; i < out.grad_at_rep.size(); ++i)
                out.grad_at_rep[i] += w * reg.grad_rep[i];
        }
    } else {
        out.balance = balance(ce_at_rep, Tensor(ce_at_rep.shape()), ptr, false);
    }
    for (double& g : out.grad_at_rep.values())
        g *= inv_batch;

    out.grads = backward_from_rep(net, state, trace, out.grad_at_rep);
    out.grads[net.head_index()] = std::move(head.grads);
    return out;
}

void sgd_update(NetworkState& state, const Gradients& grads, double lr, double momentum, double weight_decay)
{
    for (std::size_t layer = 0; layer < state.layers.size(); ++layer) {
        auto& p = state.layers[layer];
        if (!p.learnable())
            continue;
        for (auto [theta, velocity, grad] :
             {std::tuple{&p.weights, &p.weight_velocity, &grads[layer].weights},
              std::tuple{&p.biases, &p.bias_velocity, &grads[layer].biases}}) {
            for (std::size_t i = 0; i < theta->size(); ++i) {
                double& v = (*velocity)[i];
                v = momentum * v + (*grad)[i] + weight_decay * (*theta)[i];
                (*theta)[i] -= lr * v;
            }
        }
    }
}

BatchResult train_batch(const Network& net, NetworkState& state, const Tensor& batch,
                        std::span<const std::size_t> labels, const PtrConfig& ptr, const OptimizerConfig& opt,
                        double lr, bool gate_on, RunRngs& rngs, std::size_t batch_index)
{
    StepGradients step = compute_step_gradients(net, state, batch, labels, ptr, gate_on, rngs, batch_index);
    sgd_update(state, step.grads, lr, opt.momentum, opt.effective_weight_decay());
    return {step.stats, std::move(step.balance)};
}

Tensor make_batch(const Dataset& dataset, std::span<const std::size_t> order, std::vector<std::size_t>& labels)
{
    const Shape& sample = dataset.sample_shape();
    Shape shape{order.size()};
    shape.insert(shape.end(), sample.begin(), sample.end());
    Tensor batch(shape);
    labels.clear();
    const std::size_t stride = shape_size(sample);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const Sample& s = dataset.samples.at(order[i]);
        std::copy(s.x.values().begin(), s.x.values().end(), batch.values().begin() + i * stride);
        labels.push_back(s.label);
    }
    return batch;
}

Evaluation evaluate(const Network& net, const NetworkState& state, const Dataset& dataset)
{
    Evaluation out;
    out.probs = Tensor({dataset.size(), net.n_classes()});
    if (dataset.empty())
        return out;

    const std::size_t n_chunks = (dataset.size() + kEvalBatch - 1) / kEvalBatch;
    auto run_chunk = [&](std::size_t chunk) {
        const std::size_t begin = chunk * kEvalBatch, end = std::min(dataset.size(), begin + kEvalBatch);
        std::vector<std::size_t> order(end - begin);
        std::iota(order.begin(), order.end(), begin);
        std::vector<std::size_t> labels;
        const Tensor batch = make_batch(dataset, order, labels);
        Rng unused(0);
        const Tensor probs = softmax(forward(net, state, batch, Mode::Eval, unused).logits());
        std::copy(probs.values().begin(), probs.values().end(),
                  out.probs.values().begin() + begin * net.n_classes());
    };

    const std::size_t threads = std::min(eval_threads(), n_chunks);
    if (threads <= 1) {
        for (std::size_t c = 0; c < n_chunks; ++c)
            run_chunk(c);
    } else {
        std::vector<std::jthread> workers;
        for (std::size_t t = 0; t < threads; ++t)
            workers.emplace_back([&, t] {
                for (std::size_t c = t; c < n_chunks; c += threads)
                    run_chunk(c);
            });
    }
    out.accuracy = accuracy(out.probs, dataset.labels());
    return out;
}

TrainResult run_training(const Network& net, NetworkState initial, const Dataset& train, const Dataset& val,
                         const PtrConfig& ptr, const OptimizerConfig& opt, const AugmentPolicy& augment_policy)
{
    if (train.empty())
        throw TrainingError("training set is empty");
    opt.validate();
    const auto started = std::chrono::steady_clock::now();

    TrainResult result;
    result.report.seed = opt.seed;
    result.final_state = std::move(initial);
    NetworkState& state = result.final_state;

    RunRngs rngs(opt.seed);
    Gate gate(ptr.gate_threshold);
    std::optional<double> prev_mean_ce;
    const bool augment_images = augment_policy.active() && train.sample_shape().size() == 3;
    std::size_t batch_index = 0;
    std::vector<std::size_t> labels;

    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
        const bool gate_on = gate.observe(prev_mean_ce) && ptr.loss_kind.has_value();
        const double lr = learning_rate_at(opt, epoch);
        const auto order = shuffled_indices(train.size(), rngs.shuffle);

        double ce_sum = 0.0, ptr_sum = 0.0, w_sum = 0.0;
        std::size_t correct = 0, batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += opt.batch_size) {
            const std::size_t end = std::min(order.size(), begin + opt.batch_size);
            const std::span<const std::size_t> members(order.data() + begin, end - begin);
            Tensor batch = make_batch(train, members, labels);
            if (augment_images) {
                const std::size_t stride = shape_size(train.sample_shape());
                for (std::size_t i = 0; i < members.size(); ++i) {
                    const Tensor augmented = augment(train.samples[members[i]].x, augment_policy, rngs.augment);
                    std::copy(augmented.values().begin(), augmented.values().end(),
                              batch.values().begin() + i * stride);
                }
            }
            BatchResult r;
            try {
                r = train_batch(net, state, batch, labels, ptr, opt, lr, gate_on, rngs, batch_index);
            } catch (const TrainingError& e) {
                throw TrainingError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")");
            }
            ce_sum += r.stats.ce_sum;
            ptr_sum += r.stats.ptr_sum;
            w_sum += r.balance.w;
            correct += r.stats.correct;
            ++batches;
            ++batch_index;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_ce = ce_sum / static_cast<double>(train.size());
        stats.mean_ptr_loss = ptr_sum / static_cast<double>(train.size());
        stats.mean_w = w_sum / static_cast<double>(batches);
        stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
        stats.lr = lr;
        stats.gate_on = gate_on;
        if (!val.empty()) {
            const Evaluation ev = evaluate(net, state, val);
            stats.val_accuracy = ev.accuracy;
            stats.val_mean_entropy_bits = mean_entropy_bits(ev.probs);
        }
        result.report.epochs.push_back(stats);
        prev_mean_ce = stats.mean_ce;
    }

    result.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

nlohmann::json to_json(const EpochStats& s)
{
    return {
        {"epoch", s.epoch},
        {"mean_ce", s.mean_ce},
        {"mean_ptr_loss", s.mean_ptr_loss},
        {"mean_w", s.mean_w},
        {"train_accuracy", s.train_accuracy},
        {"val_accuracy", s.val_accuracy},
        {"val_mean_entropy_bits", s.val_mean_entropy_bits},
        {"lr", s.lr},
        {"gate_on", s.gate_on},
    };
}

nlohmann::json to_json(const TrainReport& report)
{
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : report.epochs)
        epochs.push_back(to_json(e));
    return {{"seed", report.seed}, {"epochs", epochs}, {"checkpoint", report.checkpoint_path}};
}

std::string epochs_csv(const TrainReport& report)
{
    std::ostringstream out;
    out.precision(17);
    out << "epoch,mean_ce,mean_ptr_loss,mean_w,train_accuracy,val_accuracy,val_mean_entropy_bits,lr,gate_on\n";
    for (const auto& s : report.epochs)
        out << s.epoch << ',' << s.mean_ce << ',' << s.mean_ptr_loss << ',' << s.mean_w << ',' << s.train_accuracy
            << ',' << s.val_accuracy << ',' << s.val_mean_entropy_bits << ',' << s.lr << ',' << (s.gate_on ? 1 : 0)
            << '\n';
    return out.str();
}

} // namespace ptrlab
