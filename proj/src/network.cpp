#include "ptrlab/network.hpp"

#include "overloaded.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ptrlab {
namespace {

using detail::Overloaded;

std::string describe(std::size_t index, const Layer& layer)
{
    return "layer " + std::to_string(index) + " (" + layer_name(layer) + ")";
}

std::size_t conv_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding)
{
    const std::size_t padded = in + 2 * padding;
    if (kernel == 0 || stride == 0 || padded < kernel)
        return 0;
    return (padded - kernel) / stride + 1;
}

Shape infer_output(std::size_t index, const Layer& layer, const Shape& in)
{
    auto fail = [&](const std::string& why) -> Shape {
        throw ShapeError(describe(index, layer) + ": " + why + " (input " + shape_to_string(in) + ")");
    };
    return std::visit(
        Overloaded{
            [&](const DenseLayer& d) -> Shape {
                if (d.in == 0 || d.out == 0)
                    return fail("dense sizes must be positive");
                if (in.size() != 1 || in[0] != d.in)
                    return fail("expects a flat input of size " + std::to_string(d.in));
                return Shape{d.out};
            },
            [&](const Conv2dLayer& c) -> Shape {
                if (c.in_channels == 0 || c.out_channels == 0 || c.kernel == 0 || c.stride == 0)
                    return fail("conv sizes must be positive");
                if (in.size() != 3 || in[0] != c.in_channels)
                    return fail("expects a CxHxW input with " + std::to_string(c.in_channels) + " channels");
                const auto h = conv_extent(in[1], c.kernel, c.stride, c.padding);
                const auto w = conv_extent(in[2], c.kernel, c.stride, c.padding);
                if (h == 0 || w == 0)
                    return fail("kernel larger than padded input");
                return Shape{c.out_channels, h, w};
            },
            [&](const MaxPool2dLayer& p) -> Shape {
                if (p.kernel == 0 || p.stride == 0)
                    return fail("pool sizes must be positive");
                if (in.size() != 3)
                    return fail("expects a CxHxW input");
                const auto h = conv_extent(in[1], p.kernel, p.stride, 0);
                const auto w = conv_extent(in[2], p.kernel, p.stride, 0);
                if (h == 0 || w == 0)
                    return fail("pool window larger than input");
                return Shape{in[0], h, w};
            },
            [&](const ReluLayer&) -> Shape { return in; },
            [&](const DropoutLayer& d) -> Shape {
                if (!(d.rate >= 0.0 && d.rate < 1.0))
                    return fail("dropout rate must lie in [0, 1)");
                return in;
            },
            [&](const FlattenLayer&) -> Shape { return Shape{shape_size(in)}; },
        },
        layer);
}

Shape batch_shape(std::size_t batch, const Shape& sample)
{
    Shape s{batch};
    s.insert(s.end(), sample.begin(), sample.end());
    return s;
}

// y = x W^T + b for a batch of flat rows.
Tensor dense_forward(const Tensor& x, const LayerParams& p, const DenseLayer& d)
{
    const std::size_t batch = x.dim(0);
    Tensor y({batch, d.out});
    for (std::size_t b = 0; b < batch; ++b) {
        const auto xr = x.row(b);
        for (std::size_t o = 0; o < d.out; ++o) {
            double sum = p.biases[o];
            const double* w = &p.weights[o * d.in];
            for (std::size_t i = 0; i < d.in; ++i)
                sum += w[i] * xr[i];
            y.at(b, o) = sum;
        }
    }
    return y;
}

Tensor conv_forward(const Tensor& x, const LayerParams& p, const Conv2dLayer& c, const Shape& out_shape)
{
    const std::size_t batch = x.dim(0), h_in = x.dim(2), w_in = x.dim(3);
    const std::size_t h_out = out_shape[1], w_out = out_shape[2], k = c.kernel;
    Tensor y(batch_shape(batch, out_shape));
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t oc = 0; oc < c.out_channels; ++oc)
            for (std::size_t oy = 0; oy < h_out; ++oy)
                for (std::size_t ox = 0; ox < w_out; ++ox) {
                    double sum = p.biases[oc];
                    for (std::size_t ic = 0; ic < c.in_channels; ++ic)
                        for (std::size_t ky = 0; ky < k; ++ky) {
                            const auto iy = static_cast<std::ptrdiff_t>(oy * c.stride + ky) - static_cast<std::ptrdiff_t>(c.padding);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h_in))
                                continue;
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const auto ix = static_cast<std::ptrdiff_t>(ox * c.stride + kx) - static_cast<std::ptrdiff_t>(c.padding);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w_in))
                                    continue;
                                sum += p.weights[((oc * c.in_channels + ic) * k + ky) * k + kx]
                                       * x[((b * c.in_channels + ic) * h_in + iy) * w_in + ix];
                            }
                        }
                    y[((b * c.out_channels + oc) * h_out + oy) * w_out + ox] = sum;
                }
    return y;
}

void conv_backward(const Tensor& x, const Tensor& dy, const LayerParams& p, const Conv2dLayer& c, ParamGrad& grads,
                   Tensor& dx)
{
    const std::size_t batch = x.dim(0), h_in = x.dim(2), w_in = x.dim(3);
    const std::size_t h_out = dy.dim(2), w_out = dy.dim(3), k = c.kernel;
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t oc = 0; oc < c.out_channels; ++oc)
            for (std::size_t oy = 0; oy < h_out; ++oy)
                for (std::size_t ox = 0; ox < w_out; ++ox) {
                    const double g = dy[((b * c.out_channels + oc) * h_out + oy) * w_out + ox];
                    grads.biases[oc] += g;
                    for (std::size_t ic = 0; ic < c.in_channels; ++ic)
                        for (std::size_t ky = 0; ky < k; ++ky) {
                            const auto iy = static_cast<std::ptrdiff_t>(oy * c.stride + ky) - static_cast<std::ptrdiff_t>(c.padding);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h_in))
                                continue;
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const auto ix = static_cast<std::ptrdiff_t>(ox * c.stride + kx) - static_cast<std::ptrdiff_t>(c.padding);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w_in))
                                    continue;
                                const std::size_t wi = ((oc * c.in_channels + ic) * k + ky) * k + kx;
                                const std::size_t xi = ((b * c.in_channels + ic) * h_in + iy) * w_in + ix;
                                grads.weights[wi] += g * x[xi];
                                dx[xi] += g * p.weights[wi];
                            }
                        }
                }
}

// Index into the input of the maximum in one pooling window; ties keep the
// first position in row-major scan order.
template <class Fn>
void for_each_pool_window(const Tensor& x, const MaxPool2dLayer& pool, const Shape& out_shape, Fn&& fn)
{
    const std::size_t batch = x.dim(0), channels = x.dim(1), h_in = x.dim(2), w_in = x.dim(3);
    const std::size_t h_out = out_shape[1], w_out = out_shape[2];
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t ch = 0; ch < channels; ++ch)
            for (std::size_t oy = 0; oy < h_out; ++oy)
                for (std::size_t ox = 0; ox < w_out; ++ox) {
                    std::size_t best = 0;
                    double best_value = -std::numeric_limits<double>::infinity();
                    for (std::size_t ky = 0; ky < pool.kernel; ++ky)
                        for (std::size_t kx = 0; kx < pool.kernel; ++kx) {
                            const std::size_t xi = ((b * channels + ch) * h_in + oy * pool.stride + ky) * w_in
                                                   + ox * pool.stride + kx;
                            if (x[xi] > best_value) {
                                best_value = x[xi];
                                best = xi;
                            }
                        }
                    fn(((b * channels + ch) * h_out + oy) * w_out + ox, best);
                }
}

Tensor layer_forward(std::size_t index, const Network& net, const LayerParams& params, const Tensor& x,
                     const Tensor* mask)
{
    const Layer& layer = net.layer(index);
    const Shape out_shape = batch_shape(x.dim(0), net.output_shape(index));
    return std::visit(
        Overloaded{
            [&](const DenseLayer& d) { return dense_forward(x, params, d); },
            [&](const Conv2dLayer& c) { return conv_forward(x, params, c, net.output_shape(index)); },
            [&](const MaxPool2dLayer& p) {
                Tensor y(out_shape);
                for_each_pool_window(x, p, net.output_shape(index),
                                     [&](std::size_t yi, std::size_t xi) { y[yi] = x[xi]; });
                return y;
            },
            [&](const ReluLayer&) {
                Tensor y = x;
                // NaN passes through so divergence stays visible downstream.
                for (double& v : y.values())
                    v = v <= 0.0 ? 0.0 : v;
                return y;
            },
            [&](const DropoutLayer&) {
                Tensor y = x;
                if (mask != nullptr && !mask->empty())
                    for (std::size_t i = 0; i < y.size(); ++i)
                        y[i] *= (*mask)[i];
                return y;
            },
            [&](const FlattenLayer&) { return x.reshaped(out_shape); },
        },
        layer);
}

// Propagates dy back through layer `index`; accumulates parameter gradients
// into `grads` and returns dL/dx.
Tensor layer_backward(std::size_t index, const Network& net, const LayerParams& params, const Tensor& x,
                      const Tensor& dy, const Tensor* mask, ParamGrad& grads)
{
    return std::visit(
        Overloaded{
            [&](const DenseLayer& d) {
                Tensor dx(x.shape());
                const std::size_t batch = x.dim(0);
                for (std::size_t b = 0; b < batch; ++b) {
                    const auto xr = x.row(b);
                    auto dxr = dx.row(b);
                    for (std::size_t o = 0; o < d.out; ++o) {
                        const double g = dy.at(b, o);
                        if (g == 0.0)
                            continue;
                        grads.biases[o] += g;
                        double* gw = &grads.weights[o * d.in];
                        const double* w = &params.weights[o * d.in];
                        for (std::size_t i = 0; i < d.in; ++i) {
                            gw[i] += g * xr[i];
                            dxr[i] += g * w[i];
                        }
                    }
                }
                return dx;
            },
            [&](const Conv2dLayer& c) {
                Tensor dx(x.shape());
                conv_backward(x, dy, params, c, grads, dx);
                return dx;
            },
            [&](const MaxPool2dLayer& p) {
                Tensor dx(x.shape());
                for_each_pool_window(x, p, net.output_shape(index),
                                     [&](std::size_t yi, std::size_t xi) { dx[xi] += dy[yi]; });
                return dx;
            },
            [&](const ReluLayer&) {
                Tensor dx = dy;
                for (std::size_t i = 0; i < dx.size(); ++i)
                    if (!(x[i] > 0.0))
                        dx[i] = 0.0;
                return dx;
            },
            [&](const DropoutLayer&) {
                Tensor dx = dy;
                if (mask != nullptr && !mask->empty())
                    for (std::size_t i = 0; i < dx.size(); ++i)
                        dx[i] *= (*mask)[i];
                return dx;
            },
            [&](const FlattenLayer&) { return dy.reshaped(x.shape()); },
        },
        net.layer(index));
}

void check_batch(const Network& net, const Tensor& batch)
{
    const Shape& sample = net.input_shape();
    const bool ok = batch.rank() == sample.size() + 1 && batch.dim(0) > 0
                    && std::equal(sample.begin(), sample.end(), batch.shape().begin() + 1);
    if (!ok)
        throw ShapeError("input: batch shape " + shape_to_string(batch.shape()) + " does not match network input "
                         + shape_to_string(batch_shape(batch.rank() > 0 ? batch.dim(0) : 0, sample)));
}

void check_state(const Network& net, const NetworkState& state)
{
    if (state.layers.size() != net.layer_count())
        throw ShapeError("state has " + std::to_string(state.layers.size()) + " layers, network has "
                         + std::to_string(net.layer_count()));
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        const auto& p = state.layers[i];
        if (p.weights.shape() != net.weight_shape(i) || p.biases.shape() != net.bias_shape(i))
            throw ShapeError(describe(i, net.layer(i)) + ": parameter shapes do not match the layer");
    }
}

BatchTrace run_forward(const Network& net, const NetworkState& state, const Tensor& batch,
                       const std::vector<Tensor>& masks)
{
    check_batch(net, batch);
    check_state(net, state);
    BatchTrace trace;
    trace.input = batch;
    trace.masks = masks;
    trace.rep_index = net.rep_index();
    trace.activations.reserve(net.layer_count());
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        const Tensor& x = i == 0 ? batch : trace.activations.back();
        trace.activations.push_back(layer_forward(i, net, state.layers[i], x, &masks[i]));
    }
    return trace;
}

} // namespace

std::string layer_name(const Layer& layer)
{
    return std::visit(Overloaded{
                          [](const DenseLayer&) { return std::string("dense"); },
                          [](const Conv2dLayer&) { return std::string("conv2d"); },
                          [](const MaxPool2dLayer&) { return std::string("maxpool2d"); },
                          [](const ReluLayer&) { return std::string("relu"); },
                          [](const DropoutLayer&) { return std::string("dropout"); },
                          [](const FlattenLayer&) { return std::string("flatten"); },
                      },
                      layer);
}

bool is_learnable(const Layer& layer)
{
    return std::holds_alternative<DenseLayer>(layer) || std::holds_alternative<Conv2dLayer>(layer);
}

Network::Network(NetworkSpec spec)
    : spec_(std::move(spec))
{
    if (spec_.input_shape.empty() || shape_size(spec_.input_shape) == 0)
        throw ShapeError("input: shape must be non-empty with positive dimensions");
    if (spec_.layers.size() < 2)
        throw ShapeError("network needs at least a representation layer and a classifier head");
    if (spec_.representation_index + 2 != spec_.layers.size())
        throw ShapeError("representation_index " + std::to_string(spec_.representation_index)
                         + " must be directly before the classifier head (expected "
                         + std::to_string(spec_.layers.size() - 2) + ")");
    if (!std::holds_alternative<DenseLayer>(spec_.layers.back()))
        throw ShapeError(describe(spec_.layers.size() - 1, spec_.layers.back()) + ": classifier head must be dense");

    Shape current = spec_.input_shape;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        current = infer_output(i, spec_.layers[i], current);
        output_shapes_.push_back(current);
    }
    if (output_shapes_[rep_index()].size() != 1)
        throw ShapeError(describe(rep_index(), spec_.layers[rep_index()]) + ": representation must be flat, got "
                         + shape_to_string(output_shapes_[rep_index()]));
}

Shape Network::weight_shape(std::size_t i) const
{
    return std::visit(Overloaded{
                          [](const DenseLayer& d) { return Shape{d.out, d.in}; },
                          [](const Conv2dLayer& c) {
                              return Shape{c.out_channels, c.in_channels, c.kernel, c.kernel};
                          },
                          [](const auto&) { return Shape{}; },
                      },
                      layer(i));
}

Shape Network::bias_shape(std::size_t i) const
{
    return std::visit(Overloaded{
                          [](const DenseLayer& d) { return Shape{d.out}; },
                          [](const Conv2dLayer& c) { return Shape{c.out_channels}; },
                          [](const auto&) { return Shape{}; },
                      },
                      layer(i));
}

NetworkState zero_state(const Network& net)
{
    NetworkState state;
    state.layers.resize(net.layer_count());
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        if (!is_learnable(net.layer(i)))
            continue;
        auto& p = state.layers[i];
        p.weights = Tensor(net.weight_shape(i));
        p.biases = Tensor(net.bias_shape(i));
        p.weight_velocity = Tensor(net.weight_shape(i));
        p.bias_velocity = Tensor(net.bias_shape(i));
    }
    return state;
}

NetworkState init_state(const Network& net, Rng& rng)
{
    NetworkState state = zero_state(net);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        auto& p = state.layers[i];
        if (!p.learnable())
            continue;
        const double fan_in = static_cast<double>(p.weights.size() / p.weights.dim(0));
        const double stddev = std::sqrt(2.0 / fan_in);
        for (double& w : p.weights.values())
            w = stddev * normal(rng);
    }
    return state;
}

Gradients zero_gradients(const Network& net)
{
    Gradients grads(net.layer_count());
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        if (!is_learnable(net.layer(i)))
            continue;
        grads[i].weights = Tensor(net.weight_shape(i));
        grads[i].biases = Tensor(net.bias_shape(i));
    }
    return grads;
}

BatchTrace forward(const Network& net, const NetworkState& state, const Tensor& batch, Mode mode, Rng& rng)
{
    check_batch(net, batch);
    std::vector<Tensor> masks(net.layer_count());
    if (mode == Mode::Train) {
        // Masks depend only on shapes, so they can be drawn up front.
        for (std::size_t i = 0; i < net.layer_count(); ++i) {
            const auto* dropout = std::get_if<DropoutLayer>(&net.layer(i));
            if (dropout == nullptr)
                continue;
            Tensor mask(batch_shape(batch.dim(0), net.output_shape(i)));
            const double keep = 1.0 - dropout->rate;
            for (double& m : mask.values())
                m = uniform01(rng) < keep ? 1.0 / keep : 0.0;
            masks[i] = std::move(mask);
        }
    }
    return run_forward(net, state, batch, masks);
}

BatchTrace forward_with_masks(const Network& net, const NetworkState& state, const Tensor& batch,
                              const std::vector<Tensor>& masks)
{
    if (masks.size() != net.layer_count())
        throw ShapeError("mask list has " + std::to_string(masks.size()) + " entries, network has "
                         + std::to_string(net.layer_count()) + " layers");
    for (std::size_t i = 0; i < masks.size(); ++i)
        if (!masks[i].empty() && masks[i].shape() != batch_shape(batch.dim(0), net.output_shape(i)))
            throw ShapeError(describe(i, net.layer(i)) + ": dropout mask shape mismatch");
    return run_forward(net, state, batch, masks);
}

Tensor softmax(const Tensor& logits)
{
    if (logits.rank() != 2)
        throw ShapeError("softmax: logits must be batch x classes");
    Tensor probs(logits.shape());
    for (std::size_t b = 0; b < logits.dim(0); ++b) {
        const auto z = logits.row(b);
        auto p = probs.row(b);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (std::size_t k = 0; k < z.size(); ++k) {
            p[k] = std::exp(z[k] - zmax);
            sum += p[k];
        }
        for (double& v : p)
            v /= sum;
    }
    return probs;
}

CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels)
{
    if (logits.rank() != 2 || logits.dim(0) != labels.size())
        throw ShapeError("cross-entropy: logits " + shape_to_string(logits.shape()) + " do not match "
                         + std::to_string(labels.size()) + " labels");
    const std::size_t classes = logits.dim(1);
    CrossEntropy out;
    out.loss.resize(labels.size());
    out.grad_logits = Tensor(logits.shape());
    for (std::size_t b = 0; b < labels.size(); ++b) {
        if (labels[b] >= classes)
            throw std::out_of_range("cross-entropy: label " + std::to_string(labels[b]) + " of instance "
                                    + std::to_string(b) + " outside [0, " + std::to_string(classes) + ")");
        const auto z = logits.row(b);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z)
            sum += std::exp(v - zmax);
        const double log_sum = zmax + std::log(sum);
        out.loss[b] = log_sum - z[labels[b]];
        auto g = out.grad_logits.row(b);
        for (std::size_t k = 0; k < classes; ++k)
            g[k] = std::exp(z[k] - log_sum);
        g[labels[b]] -= 1.0;
    }
    return out;
}

Gradients backward_from_rep(const Network& net, const NetworkState& state, const BatchTrace& trace,
                            const Tensor& grad_at_rep)
{
    if (grad_at_rep.shape() != trace.rep().shape())
        throw ShapeError("backward: gradient shape " + shape_to_string(grad_at_rep.shape())
                         + " does not match representation " + shape_to_string(trace.rep().shape()));
    Gradients grads = zero_gradients(net);
    grads[net.head_index()] = ParamGrad{};
    Tensor dy = grad_at_rep;
    for (std::size_t i = net.rep_index() + 1; i-- > 0;) {
        const Tensor& x = i == 0 ? trace.input : trace.activations[i - 1];
        dy = layer_backward(i, net, state.layers[i], x, dy, &trace.masks[i], grads[i]);
    }
    return grads;
}

HeadBackward head_backward(const Network& net, const NetworkState& state, const BatchTrace& trace,
                           const Tensor& grad_logits)
{
    if (grad_logits.shape() != trace.logits().shape())
        throw ShapeError("head backward: gradient shape " + shape_to_string(grad_logits.shape())
                         + " does not match logits " + shape_to_string(trace.logits().shape()));
    const std::size_t head = net.head_index();
    HeadBackward out;
    out.grads.weights = Tensor(net.weight_shape(head));
    out.grads.biases = Tensor(net.bias_shape(head));
    out.grad_rep = layer_backward(head, net, state.layers[head], trace.rep(), grad_logits, nullptr, out.grads);
    return out;
}

} // namespace ptrlab
