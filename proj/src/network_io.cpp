#include "ptrlab/network_io.hpp"

#include "json_fields.hpp"
#include "overloaded.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace ptrlab {
namespace {

using detail::Fields;

using detail::Overloaded;

Layer layer_from_json(const nlohmann::json& j, const std::string& path)
{
    Fields f(j, path);
    const std::string type = f.text("type");
    if (type == "dense") {
        f.only({"type", "in", "out"});
        return DenseLayer{f.count("in"), f.count("out")};
    }
    if (type == "conv2d") {
        f.only({"type", "in_channels", "out_channels", "kernel", "stride", "padding"});
        return Conv2dLayer{f.count("in_channels"), f.count("out_channels"), f.count("kernel"), f.count("stride", 1),
                           f.count("padding", 0)};
    }
    if (type == "maxpool2d") {
        f.only({"type", "kernel", "stride"});
        const auto kernel = f.count("kernel");
        return MaxPool2dLayer{kernel, f.count("stride", kernel)};
    }
    if (type == "relu") {
        f.only({"type"});
        return ReluLayer{};
    }
    if (type == "dropout") {
        f.only({"type", "rate"});
        return DropoutLayer{f.number("rate")};
    }
    if (type == "flatten") {
        f.only({"type"});
        return FlattenLayer{};
    }
    throw ConfigError(f.key_path("type"), "unknown layer type '" + type + "'");
}

void put_u64(std::ostream& out, std::uint64_t v)
{
    std::array<char, 8> bytes{};
    for (std::size_t i = 0; i < 8; ++i)
        bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffU);
    out.write(bytes.data(), bytes.size());
}

std::uint64_t get_u64(std::istream& in, const std::filesystem::path& file)
{
    std::array<unsigned char, 8> bytes{};
    if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size()))
        throw std::runtime_error("checkpoint " + file.string() + ": truncated");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

} // namespace

nlohmann::json network_spec_to_json(const NetworkSpec& spec)
{
    nlohmann::json layers = nlohmann::json::array();
    for (const Layer& layer : spec.layers) {
        layers.push_back(std::visit(
            Overloaded{
                [](const DenseLayer& d) { return nlohmann::json{{"type", "dense"}, {"in", d.in}, {"out", d.out}}; },
                [](const Conv2dLayer& c) {
                    return nlohmann::json{{"type", "conv2d"},  {"in_channels", c.in_channels},
                                          {"out_channels", c.out_channels}, {"kernel", c.kernel},
                                          {"stride", c.stride}, {"padding", c.padding}};
                },
                [](const MaxPool2dLayer& p) {
                    return nlohmann::json{{"type", "maxpool2d"}, {"kernel", p.kernel}, {"stride", p.stride}};
                },
                [](const ReluLayer&) { return nlohmann::json{{"type", "relu"}}; },
                [](const DropoutLayer& d) { return nlohmann::json{{"type", "dropout"}, {"rate", d.rate}}; },
                [](const FlattenLayer&) { return nlohmann::json{{"type", "flatten"}}; },
            },
            layer));
    }
    return nlohmann::json{
        {"input_shape", spec.input_shape},
        {"layers", layers},
        {"representation_index", spec.representation_index},
    };
}

NetworkSpec network_spec_from_json(const nlohmann::json& j, const std::string& path)
{
    Fields f(j, path);
    f.only({"input_shape", "layers", "representation_index"});
    NetworkSpec spec;
    for (auto d : f.counts("input_shape"))
        spec.input_shape.push_back(d);
    const auto& layers = f.at("layers");
    if (!layers.is_array())
        throw ConfigError(f.key_path("layers"), "expected an array");
    for (std::size_t i = 0; i < layers.size(); ++i)
        spec.layers.push_back(layer_from_json(layers[i], f.key_path("layers") + "[" + std::to_string(i) + "]"));
    spec.representation_index = f.count("representation_index");
    return spec;
}

void save_checkpoint(const std::filesystem::path& file, const NetworkState& state)
{
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("checkpoint " + file.string() + ": cannot open for writing");
    put_u64(out, state.layers.size());
    for (const auto& p : state.layers) {
        put_u64(out, p.learnable() ? 2 : 0);
        if (!p.learnable())
            continue;
        for (const Tensor* t : {&p.weights, &p.biases}) {
            put_u64(out, t->rank());
            for (auto d : t->shape())
                put_u64(out, d);
        }
    }
    for (const auto& p : state.layers) {
        if (!p.learnable())
            continue;
        for (const Tensor* t : {&p.weights, &p.biases})
            for (double v : t->values())
                put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    if (!out)
        throw std::runtime_error("checkpoint " + file.string() + ": write failed");
}

NetworkState load_checkpoint(const std::filesystem::path& file, const Network& net)
{
    std::ifstream in(file, std::ios::binary);
    if (!in)
        throw std::runtime_error("checkpoint " + file.string() + ": cannot open");
    const auto layer_count = get_u64(in, file);
    if (layer_count != net.layer_count())
        throw std::runtime_error("checkpoint " + file.string() + ": holds " + std::to_string(layer_count)
                                 + " layers, network has " + std::to_string(net.layer_count()));
    NetworkState state = zero_state(net);
    for (std::size_t i = 0; i < layer_count; ++i) {
        const auto tensors = get_u64(in, file);
        const std::size_t expected = is_learnable(net.layer(i)) ? 2 : 0;
        if (tensors != expected)
            throw std::runtime_error("checkpoint " + file.string() + ": layer " + std::to_string(i) + " stores "
                                     + std::to_string(tensors) + " tensors, expected " + std::to_string(expected));
        for (std::size_t t = 0; t < tensors; ++t) {
            const auto rank = get_u64(in, file);
            if (rank > 8)
                throw std::runtime_error("checkpoint " + file.string() + ": implausible tensor rank");
            Shape shape(rank);
            for (auto& d : shape)
                d = get_u64(in, file);
            const Shape& want = t == 0 ? net.weight_shape(i) : net.bias_shape(i);
            if (shape != want)
                throw std::runtime_error("checkpoint " + file.string() + ": layer " + std::to_string(i) + " shape "
                                         + shape_to_string(shape) + " does not match " + shape_to_string(want));
        }
    }
    for (auto& p : state.layers) {
        if (!p.learnable())
            continue;
        for (Tensor* t : {&p.weights, &p.biases})
            for (double& v : t->values())
                v = std::bit_cast<double>(get_u64(in, file));
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw std::runtime_error("checkpoint " + file.string() + ": trailing bytes after payload");
    return state;
}

} // namespace ptrlab
