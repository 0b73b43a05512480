#pragma once

#include "ptrlab/rng.hpp"
#include "ptrlab/tensor.hpp"

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace ptrlab {

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
};

struct Conv2dLayer {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
};

struct MaxPool2dLayer {
    std::size_t kernel = 2;
    std::size_t stride = 2;
};

struct ReluLayer {};

struct DropoutLayer {
    double rate = 0.5;
};

struct FlattenLayer {};

using Layer = std::variant<DenseLayer, Conv2dLayer, MaxPool2dLayer, ReluLayer, DropoutLayer, FlattenLayer>;

std::string layer_name(const Layer& layer);
bool is_learnable(const Layer& layer);

/// Architecture description. `layers` holds the backbone followed by the
/// classifier head; the head must be the single Dense layer directly after
/// `representation_index`.
struct NetworkSpec {
    Shape input_shape; // per sample, e.g. {dim} or {channels, height, width}
    std::vector<Layer> layers;
    std::size_t representation_index = 0;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A validated NetworkSpec with per-layer shapes resolved.
class Network {
public:
    explicit Network(NetworkSpec spec);

    const NetworkSpec& spec() const noexcept { return spec_; }
    std::size_t layer_count() const noexcept { return spec_.layers.size(); }
    const Layer& layer(std::size_t i) const { return spec_.layers.at(i); }

    std::size_t rep_index() const noexcept { return spec_.representation_index; }
    std::size_t head_index() const noexcept { return spec_.representation_index + 1; }
    std::size_t rep_dim() const noexcept { return output_shapes_[rep_index()][0]; }
    std::size_t n_classes() const noexcept { return output_shapes_.back()[0]; }

    const Shape& input_shape() const noexcept { return spec_.input_shape; }
    const Shape& input_shape(std::size_t i) const { return i == 0 ? spec_.input_shape : output_shapes_.at(i - 1); }
    const Shape& output_shape(std::size_t i) const { return output_shapes_.at(i); }

    /// Empty shapes for layers without parameters.
    Shape weight_shape(std::size_t i) const;
    Shape bias_shape(std::size_t i) const;

private:
    NetworkSpec spec_;
    std::vector<Shape> output_shapes_;
};

/// Learnable parameters and momentum buffers of one layer. All four tensors
/// are empty for layers without parameters.
struct LayerParams {
    Tensor weights;
    Tensor biases;
    Tensor weight_velocity;
    Tensor bias_velocity;

    bool learnable() const noexcept { return !weights.empty(); }

    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct NetworkState {
    std::vector<LayerParams> layers;

    friend bool operator==(const NetworkState&, const NetworkState&) = default;
};

/// He-normal weights, zero biases, zero velocities.
NetworkState init_state(const Network& net, Rng& rng);
NetworkState zero_state(const Network& net);

struct ParamGrad {
    Tensor weights;
    Tensor biases;
};

/// One entry per layer; parameterless layers keep empty tensors.
using Gradients = std::vector<ParamGrad>;

Gradients zero_gradients(const Network& net);

enum class Mode { Train, Eval };

struct BatchTrace {
    Tensor input;
    std::vector<Tensor> activations; // output of layer i
    std::vector<Tensor> masks;       // scaled keep-masks of dropout layers; empty means identity
    std::size_t rep_index = 0;
    std::vector<double> ce_loss;     // per instance, set once labels are applied

    const Tensor& rep() const { return activations.at(rep_index); }
    const Tensor& logits() const { return activations.back(); }
    std::size_t batch_size() const { return input.empty() ? 0 : input.dim(0); }
};

/// Evaluates every layer. In Mode::Train dropout masks are drawn from `rng`
/// (inverted dropout); in Mode::Eval dropout is the identity and `rng` is
/// untouched.
BatchTrace forward(const Network& net, const NetworkState& state, const Tensor& batch, Mode mode, Rng& rng);

/// Replays a forward pass with previously drawn dropout masks.
BatchTrace forward_with_masks(const Network& net, const NetworkState& state, const Tensor& batch,
                              const std::vector<Tensor>& masks);

Tensor softmax(const Tensor& logits);

struct CrossEntropy {
    std::vector<double> loss; // -log softmax(logits)[label], per instance
    Tensor grad_logits;       // softmax - one_hot, per instance (not batch scaled)
};

CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

/// Gradients of <grad_at_rep, rep> w.r.t. every parameter at or before the
/// representation layer. The head entry is left empty.
Gradients backward_from_rep(const Network& net, const NetworkState& state, const BatchTrace& trace,
                            const Tensor& grad_at_rep);

struct HeadBackward {
    ParamGrad grads;  // summed over the batch with the given grad_logits
    Tensor grad_rep;  // per instance W^T g
};

HeadBackward head_backward(const Network& net, const NetworkState& state, const BatchTrace& trace,
                           const Tensor& grad_logits);

} // namespace ptrlab
