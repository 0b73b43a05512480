#pragma once

#include "ptrlab/rng.hpp"
#include "ptrlab/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace ptrlab {

enum class Split { Train, Val, Test };

std::string to_string(Split split);

struct Sample {
    Tensor x;
    std::size_t label = 0;

    friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
    std::vector<Sample> samples;
    std::size_t n_classes = 0;
    Split split = Split::Train;
    std::string provenance;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
    const Shape& sample_shape() const { return samples.at(0).x.shape(); }
    std::vector<std::size_t> labels() const;

    /// Throws if a label is out of range or sample shapes differ.
    void validate() const;
};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Gaussian blobs around class centers drawn uniformly on a sphere of radius
/// `class_separation`. Fully determined by `seed`.
Dataset make_blobs(std::size_t n_classes, std::size_t n_per_class, std::size_t dim, double class_separation,
                   double noise_sigma, std::uint64_t seed);

/// IDX image/label pair (MNIST layout). Images become 1 x rows x cols tensors
/// with pixels scaled to [0, 1].
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Header-free CSV rows of `label,feature,...`.
Dataset load_csv(const std::filesystem::path& path);

struct TrainValSplit {
    Dataset train;
    Dataset val;
    std::vector<std::string> warnings;
};

/// Stratified split: each class sends round(n_c * val_fraction) samples to
/// validation but always keeps at least one in train.
TrainValSplit split_train_val(const Dataset& dataset, double val_fraction, std::uint64_t seed);

struct AugmentPolicy {
    bool flip_horizontal = false;
    std::size_t max_shift_pixels = 0;

    bool active() const noexcept { return flip_horizontal || max_shift_pixels > 0; }
};

/// Random horizontal flip and integer translation with zero fill on a
/// C x H x W tensor.
Tensor augment(const Tensor& sample, const AugmentPolicy& policy, Rng& rng);

/// Deterministic building blocks of `augment`.
Tensor flip_horizontal(const Tensor& image);
Tensor shift_image(const Tensor& image, std::ptrdiff_t dy, std::ptrdiff_t dx);

} // namespace ptrlab
