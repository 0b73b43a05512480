#include "ptrlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ptrlab {

std::size_t shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape)
{
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0)
            out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape))
    , data_(shape_size(shape_), fill)
{
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape))
    , data_(std::move(data))
{
    if (data_.size() != shape_size(shape_))
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size())
                                    + " does not match shape " + shape_to_string(shape_));
}

std::size_t Tensor::row_size() const
{
    if (shape_.empty() || shape_[0] == 0)
        return 0;
    return data_.size() / shape_[0];
}

std::span<double> Tensor::row(std::size_t i)
{
    const std::size_t n = row_size();
    return std::span<double>(data_).subspan(i * n, n);
}

std::span<const double> Tensor::row(std::size_t i) const
{
    const std::size_t n = row_size();
    return std::span<const double>(data_).subspan(i * n, n);
}

Tensor Tensor::reshaped(Shape shape) const
{
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value)
{
    std::fill(data_.begin(), data_.end(), value);
}

bool Tensor::all_finite() const noexcept
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double squared_norm(std::span<const double> values)
{
    double sum = 0.0;
    for (double v : values)
        sum += v * v;
    return sum;
}

} // namespace ptrlab
