#include "ptrlab/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

namespace ptrlab {
namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<unsigned char> read_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::filesystem::path& path)
{
    if (offset + 4 > bytes.size())
        throw DataError(path.string() + ": truncated header");
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16)
           | (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::string hex32(std::uint32_t v)
{
    std::ostringstream out;
    out << "0x" << std::hex;
    out.width(8);
    out.fill('0');
    out << v;
    return out.str();
}

void check_magic(std::uint32_t got, std::uint32_t expected, const std::filesystem::path& path)
{
    if (got != expected)
        throw DataError(path.string() + ": bad magic " + hex32(got) + ", expected " + hex32(expected));
}

std::string trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

double parse_double(const std::string& field, const std::string& where)
{
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(value))
        throw DataError(where + ": '" + field + "' is not a finite decimal number");
    return value;
}

} // namespace

std::string to_string(Split split)
{
    switch (split) {
    case Split::Train:
        return "train";
    case Split::Val:
        return "val";
    case Split::Test:
        return "test";
    }
    return "?";
}

std::vector<std::size_t> Dataset::labels() const
{
    std::vector<std::size_t> out;
    out.reserve(samples.size());
    for (const auto& s : samples)
        out.push_back(s.label);
    return out;
}

void Dataset::validate() const
{
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].label >= n_classes)
            throw DataError("sample " + std::to_string(i) + ": label " + std::to_string(samples[i].label)
                            + " >= n_classes " + std::to_string(n_classes));
        if (samples[i].x.shape() != samples[0].x.shape())
            throw DataError("sample " + std::to_string(i) + ": shape " + shape_to_string(samples[i].x.shape())
                            + " differs from " + shape_to_string(samples[0].x.shape()));
    }
}

Dataset make_blobs(std::size_t n_classes, std::size_t n_per_class, std::size_t dim, double class_separation,
                   double noise_sigma, std::uint64_t seed)
{
    if (n_classes == 0 || n_per_class == 0 || dim == 0)
        throw std::invalid_argument("make_blobs: counts must be positive");
    if (noise_sigma < 0.0 || class_separation < 0.0)
        throw std::invalid_argument("make_blobs: separation and sigma must be non-negative");
    Rng rng = make_rng(seed, Stream::Data);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<std::vector<double>> centers(n_classes, std::vector<double>(dim));
    for (auto& c : centers) {
        double norm = 0.0;
        while (norm == 0.0) {
            for (double& v : c)
                v = normal(rng);
            norm = std::sqrt(squared_norm(c));
        }
        for (double& v : c)
            v *= class_separation / norm;
    }

    Dataset out;
    out.n_classes = n_classes;
    std::ostringstream prov;
    prov << "blobs(n_classes=" << n_classes << ", n_per_class=" << n_per_class << ", dim=" << dim
         << ", separation=" << class_separation << ", sigma=" << noise_sigma << ", seed=" << seed << ")";
    out.provenance = prov.str();
    out.samples.reserve(n_classes * n_per_class);
    for (std::size_t k = 0; k < n_classes; ++k)
        for (std::size_t i = 0; i < n_per_class; ++i) {
            Tensor x({dim});
            for (std::size_t d = 0; d < dim; ++d)
                x[d] = centers[k][d] + noise_sigma * normal(rng);
            out.samples.push_back({std::move(x), k});
        }
    return out;
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path)
{
    const auto images = read_bytes(images_path);
    const auto labels = read_bytes(labels_path);
    check_magic(read_be32(images, 0, images_path), kIdxImagesMagic, images_path);
    check_magic(read_be32(labels, 0, labels_path), kIdxLabelsMagic, labels_path);

    const std::size_t n_images = read_be32(images, 4, images_path);
    const std::size_t rows = read_be32(images, 8, images_path);
    const std::size_t cols = read_be32(images, 12, images_path);
    const std::size_t n_labels = read_be32(labels, 4, labels_path);
    constexpr std::size_t image_header = 16, label_header = 8;

    const std::size_t pixels = rows * cols;
    if (images.size() < image_header + n_images * pixels)
        throw DataError(images_path.string() + ": truncated payload, expected " + std::to_string(n_images * pixels)
                        + " pixel bytes, found " + std::to_string(images.size() - image_header));
    if (labels.size() < label_header + n_labels)
        throw DataError(labels_path.string() + ": truncated payload, expected " + std::to_string(n_labels)
                        + " label bytes, found " + std::to_string(labels.size() - label_header));
    if (n_images != n_labels)
        throw DataError("IDX count mismatch: " + std::to_string(n_images) + " images vs " + std::to_string(n_labels)
                        + " labels");

    Dataset out;
    out.provenance = "idx(" + images_path.string() + ", " + labels_path.string() + ")";
    out.samples.reserve(n_images);
    for (std::size_t i = 0; i < n_images; ++i) {
        Tensor x({1, rows, cols});
        for (std::size_t p = 0; p < pixels; ++p)
            x[p] = static_cast<double>(images[image_header + i * pixels + p]) / 255.0;
        const std::size_t label = labels[label_header + i];
        out.n_classes = std::max(out.n_classes, label + 1);
        out.samples.push_back({std::move(x), label});
    }
    return out;
}

Dataset load_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open " + path.string());
    Dataset out;
    out.provenance = "csv(" + path.string() + ")";
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        std::vector<std::string> fields;
        std::stringstream row(line);
        std::string field;
        while (std::getline(row, field, ','))
            fields.push_back(trim(field));
        if (fields.size() < 2)
            throw DataError(where + ": expected a label and at least one feature");
        const double label = parse_double(fields[0], where);
        if (label < 0.0 || label != std::floor(label))
            throw DataError(where + ": label '" + fields[0] + "' is not a non-negative integer");
        Tensor x({fields.size() - 1});
        for (std::size_t i = 1; i < fields.size(); ++i)
            x[i - 1] = parse_double(fields[i], where);
        if (!out.samples.empty() && x.size() != out.samples.front().x.size())
            throw DataError(where + ": " + std::to_string(x.size()) + " features, earlier rows have "
                            + std::to_string(out.samples.front().x.size()));
        const auto k = static_cast<std::size_t>(label);
        out.n_classes = std::max(out.n_classes, k + 1);
        out.samples.push_back({std::move(x), k});
    }
    return out;
}

TrainValSplit split_train_val(const Dataset& dataset, double val_fraction, std::uint64_t seed)
{
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw std::invalid_argument("split_train_val: fraction must lie in (0, 1)");
    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        by_class[dataset.samples[i].label].push_back(i);

    Rng rng = make_rng(seed, Stream::Shuffle);
    std::vector<bool> to_val(dataset.size(), false);
    TrainValSplit out;
    for (auto& [label, members] : by_class) {
        const auto order = shuffled_indices(members.size(), rng);
        auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(members.size()) * val_fraction));
        if (members.size() == 1)
            out.warnings.push_back("class " + std::to_string(label) + " has a single sample; kept in train");
        n_val = std::min(n_val, members.size() - 1);
        for (std::size_t i = 0; i < n_val; ++i)
            to_val[members[order[i]]] = true;
    }

    for (Dataset* part : {&out.train, &out.val}) {
        part->n_classes = dataset.n_classes;
        part->provenance = dataset.provenance;
    }
    out.train.split = Split::Train;
    out.val.split = Split::Val;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        (to_val[i] ? out.val : out.train).samples.push_back(dataset.samples[i]);
    return out;
}

Tensor flip_horizontal(const Tensor& image)
{
    if (image.rank() != 3)
        throw std::invalid_argument("flip: expected C x H x W, got " + shape_to_string(image.shape()));
    Tensor out(image.shape());
    const std::size_t rows = image.dim(0) * image.dim(1), width = image.dim(2);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t x = 0; x < width; ++x)
            out[r * width + x] = image[r * width + (width - 1 - x)];
    return out;
}

Tensor shift_image(const Tensor& image, std::ptrdiff_t dy, std::ptrdiff_t dx)
{
    if (image.rank() != 3)
        throw std::invalid_argument("shift: expected C x H x W, got " + shape_to_string(image.shape()));
    const auto channels = image.dim(0);
    const auto height = static_cast<std::ptrdiff_t>(image.dim(1));
    const auto width = static_cast<std::ptrdiff_t>(image.dim(2));
    Tensor out(image.shape());
    for (std::size_t c = 0; c < channels; ++c)
        for (std::ptrdiff_t y = 0; y < height; ++y)
            for (std::ptrdiff_t x = 0; x < width; ++x) {
                const auto sy = y - dy, sx = x - dx;
                if (sy < 0 || sy >= height || sx < 0 || sx >= width)
                    continue;
                out[(c * height + y) * width + x] = image[(c * height + sy) * width + sx];
            }
    return out;
}

Tensor augment(const Tensor& sample, const AugmentPolicy& policy, Rng& rng)
{
    if (!policy.active())
        return sample;
    if (sample.rank() != 3)
        throw std::invalid_argument("augment: expected C x H x W, got " + shape_to_string(sample.shape()));
    if (policy.max_shift_pixels >= std::min(sample.dim(1), sample.dim(2)))
        throw std::invalid_argument("augment: max shift must be smaller than the image side");
    Tensor out = sample;
    if (policy.flip_horizontal && uniform01(rng) < 0.5)
        out = flip_horizontal(out);
    if (policy.max_shift_pixels > 0) {
        const auto s = static_cast<std::ptrdiff_t>(policy.max_shift_pixels);
        const auto span = static_cast<std::uint64_t>(2 * s + 1);
        const auto dy = static_cast<std::ptrdiff_t>(rng() % span) - s;
        const auto dx = static_cast<std::ptrdiff_t>(rng() % span) - s;
        out = shift_image(out, dy, dx);
    }
    return out;
}

} // namespace ptrlab
