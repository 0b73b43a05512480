#pragma once

#include "ptrlab/data.hpp"
#include "ptrlab/network.hpp"
#include "ptrlab/pseudo_task.hpp"

#include <cstdint>
#include <json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

namespace ptrlab {

struct OptimizerConfig {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::vector<std::size_t> lr_milestones; // epoch indices at which lr is multiplied by lr_decay_factor
    double lr_decay_factor = 0.1;
    std::size_t epochs = 30;
    std::size_t batch_size = 20;
    std::uint64_t seed = 0;
    bool use_weight_decay = true;

    double effective_weight_decay() const noexcept { return use_weight_decay ? weight_decay : 0.0; }
    void validate() const;
};

/// Two step decays at 60% and 85% of the run.
std::vector<std::size_t> default_milestones(std::size_t epochs);

/// Learning rate in effect during 0-based `epoch`.
double learning_rate_at(const OptimizerConfig& config, std::size_t epoch);

/// Per-run random streams, all derived from the run seed.
struct RunRngs {
    Rng shuffle;
    Rng dropout;
    Rng targets;
    Rng augment;

    explicit RunRngs(std::uint64_t seed);
};

struct BatchStats {
    std::size_t size = 0;
    double ce_sum = 0.0;  // sum of per-instance CE losses
    double ptr_sum = 0.0; // sum of per-instance pseudo-task losses (0 when not applied)
    std::size_t correct = 0;
};

struct StepGradients {
    Gradients grads;         // batch-mean gradients of CE + w * pseudo-task loss
    Tensor grad_at_rep;      // what was injected at the representation
    BalanceRecord balance;
    Tensor targets;          // pseudo-targets used (empty when not applied)
    BatchStats stats;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Forward, CE, head gradients from CE only, pseudo-task injection at the
/// representation when `gate_on`, and backbone gradients. No update.
StepGradients compute_step_gradients(const Network& net, const NetworkState& state, const Tensor& batch,
                                     std::span<const std::size_t> labels, const PtrConfig& ptr, bool gate_on,
                                     RunRngs& rngs, std::size_t batch_index = 0);

/// v <- momentum v + g + wd theta; theta <- theta - lr v.
void sgd_update(NetworkState& state, const Gradients& grads, double lr, double momentum, double weight_decay);

struct BatchResult {
    BatchStats stats;
    BalanceRecord balance;
};

BatchResult train_batch(const Network& net, NetworkState& state, const Tensor& batch,
                        std::span<const std::size_t> labels, const PtrConfig& ptr, const OptimizerConfig& opt,
                        double lr, bool gate_on, RunRngs& rngs, std::size_t batch_index = 0);

struct EpochStats {
    std::size_t epoch = 0;
    double mean_ce = 0.0;
    double mean_ptr_loss = 0.0;
    double mean_w = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
    double val_mean_entropy_bits = 0.0;
    double lr = 0.0;
    bool gate_on = false;

    friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct TrainReport {
    std::uint64_t seed = 0;
    std::vector<EpochStats> epochs;
    std::string checkpoint_path;
    double wall_seconds = 0.0;
};

struct TrainResult {
    TrainReport report;
    NetworkState final_state;
};

/// Algorithm loop over epochs. The returned state is the last-epoch state.
TrainResult run_training(const Network& net, NetworkState initial, const Dataset& train, const Dataset& val,
                         const PtrConfig& ptr, const OptimizerConfig& opt, const AugmentPolicy& augment_policy = {});

struct Evaluation {
    double accuracy = 0.0;
    Tensor probs; // samples x classes
};

/// Eval-mode softmax over a dataset. Parallelism is capped by the
/// PTRLAB_THREADS environment variable.
Evaluation evaluate(const Network& net, const NetworkState& state, const Dataset& dataset);

/// Stacks samples [begin, end) of `order` into one batch tensor.
Tensor make_batch(const Dataset& dataset, std::span<const std::size_t> order, std::vector<std::size_t>& labels);

nlohmann::json to_json(const EpochStats& stats);
nlohmann::json to_json(const TrainReport& report);
std::string epochs_csv(const TrainReport& report);

} // namespace ptrlab
