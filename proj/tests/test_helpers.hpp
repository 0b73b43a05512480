#pragma once

#include "ptrlab/network.hpp"
#include "ptrlab/rng.hpp"
#include "ptrlab/tensor.hpp"

#include <random>

namespace test {

inline ptrlab::Tensor random_tensor(const ptrlab::Shape& shape, std::uint64_t seed, double scale = 1.0)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    ptrlab::Tensor t(shape);
    for (double& v : t.values())
        v = normal(rng);
    return t;
}

// 6 -> 8 -> 5 -> 3, representation after the second ReLU.
inline ptrlab::NetworkSpec small_mlp()
{
    using namespace ptrlab;
    return {{6}, {DenseLayer{6, 8}, ReluLayer{}, DenseLayer{8, 5}, ReluLayer{}, DenseLayer{5, 3}}, 3};
}

inline ptrlab::NetworkSpec mlp_with_dropout()
{
    using namespace ptrlab;
    return {{6},
            {DenseLayer{6, 8}, ReluLayer{}, DropoutLayer{0.5}, DenseLayer{8, 5}, ReluLayer{}, DenseLayer{5, 3}},
            4};
}

// 1x6x6 -> conv3x3(2) -> relu -> pool2 -> flatten(8) -> dense 4 -> relu -> dense 3
inline ptrlab::NetworkSpec conv_net_spec()
{
    using namespace ptrlab;
    return {{1, 6, 6},
            {Conv2dLayer{1, 2, 3, 1, 0}, ReluLayer{}, MaxPool2dLayer{2, 2}, FlattenLayer{}, DenseLayer{8, 4},
             ReluLayer{}, DenseLayer{4, 3}},
            5};
}

} // namespace test
