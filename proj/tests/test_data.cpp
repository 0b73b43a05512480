#include "ptrlab/data.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>

using namespace ptrlab;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::vector<unsigned char>& bytes)
{
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    return path;
}

std::vector<unsigned char> be32(std::uint32_t v)
{
    return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
            static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
}

std::vector<unsigned char> concat(std::initializer_list<std::vector<unsigned char>> parts)
{
    std::vector<unsigned char> out;
    for (const auto& p : parts)
        out.insert(out.end(), p.begin(), p.end());
    return out;
}

double nearest_centroid_accuracy(const Dataset& fit, const Dataset& test)
{
    const std::size_t dim = fit.samples[0].x.size();
    std::vector<std::vector<double>> centroid(fit.n_classes, std::vector<double>(dim, 0.0));
    std::vector<double> counts(fit.n_classes, 0.0);
    for (const auto& s : fit.samples) {
        counts[s.label] += 1.0;
        for (std::size_t k = 0; k < dim; ++k)
            centroid[s.label][k] += s.x[k];
    }
    for (std::size_t c = 0; c < fit.n_classes; ++c)
        for (double& v : centroid[c])
            v /= counts[c];
    std::size_t correct = 0;
    for (const auto& s : test.samples) {
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t c = 0; c < fit.n_classes; ++c) {
            double d = 0.0;
            for (std::size_t k = 0; k < dim; ++k)
                d += (s.x[k] - centroid[c][k]) * (s.x[k] - centroid[c][k]);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        correct += best == s.label ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

} // namespace

TEST(Blobs, ZeroNoiseSitsOnCenters)
{
    const Dataset d = make_blobs(4, 5, 3, 2.0, 0.0, 1);
    ASSERT_EQ(d.size(), 20U);
    EXPECT_EQ(nearest_centroid_accuracy(d, d), 1.0);
    for (std::size_t k = 0; k < 4; ++k) {
        double norm = 0.0;
        for (double v : d.samples[k * 5].x.values())
            norm += v * v;
        EXPECT_NEAR(std::sqrt(norm), 2.0, 1e-12);
        for (std::size_t i = 1; i < 5; ++i)
            EXPECT_EQ(d.samples[k * 5 + i].x, d.samples[k * 5].x);
    }
}

TEST(Blobs, DeterministicPerSeed)
{
    EXPECT_EQ(make_blobs(3, 4, 5, 1.0, 1.0, 8).samples, make_blobs(3, 4, 5, 1.0, 1.0, 8).samples);
    EXPECT_NE(make_blobs(3, 4, 5, 1.0, 1.0, 8).samples, make_blobs(3, 4, 5, 1.0, 1.0, 9).samples);
}

TEST(Blobs, NearestCentroidOnHeldOutDraws)
{
    // Centers depend on the seed only; fit on the first 30 draws per class
    // and score the remaining 30.
    const Dataset all = make_blobs(20, 60, 64, 5.0, 1.0, 3);
    Dataset fit, held;
    fit.n_classes = held.n_classes = 20;
    for (std::size_t i = 0; i < all.size(); ++i)
        (i % 60 < 30 ? fit : held).samples.push_back(all.samples[i]);
    EXPECT_GT(nearest_centroid_accuracy(fit, held), 0.95);
}

TEST(Idx, ReadsFixture)
{
    const auto images = temp_file("ptrlab_idx_images",
                                  concat({be32(0x803), be32(2), be32(2), be32(2), {0, 255, 128, 64, 1, 2, 3, 4}}));
    const auto labels = temp_file("ptrlab_idx_labels", concat({be32(0x801), be32(2), {7, 3}}));
    const Dataset d = load_idx(images, labels);
    ASSERT_EQ(d.size(), 2U);
    EXPECT_EQ(d.n_classes, 8U);
    EXPECT_EQ(d.samples[0].x.shape(), (Shape{1, 2, 2}));
    EXPECT_DOUBLE_EQ(d.samples[0].x[0], 0.0);
    EXPECT_DOUBLE_EQ(d.samples[0].x[1], 1.0);
    EXPECT_DOUBLE_EQ(d.samples[0].x[2], 128.0 / 255.0);
    EXPECT_DOUBLE_EQ(d.samples[0].x[3], 64.0 / 255.0);
    EXPECT_EQ(d.samples[0].label, 7U);
}

TEST(Idx, RejectsWrongMagic)
{
    const auto images = temp_file("ptrlab_idx_bad_images", concat({be32(0x802), be32(1), be32(1), be32(1), {0}}));
    const auto labels = temp_file("ptrlab_idx_bad_labels", concat({be32(0x801), be32(1), {0}}));
    try {
        load_idx(images, labels);
        FAIL();
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("0x00000802"), std::string::npos) << msg;
        EXPECT_NE(msg.find("0x00000803"), std::string::npos) << msg;
    }
}

TEST(Idx, RejectsTruncatedPayloadAndCountMismatch)
{
    const auto images = temp_file("ptrlab_idx_tr_images", concat({be32(0x803), be32(2), be32(2), be32(2), {1, 2, 3, 4, 5}}));
    const auto labels = temp_file("ptrlab_idx_tr_labels", concat({be32(0x801), be32(2), {0, 1}}));
    EXPECT_THROW(load_idx(images, labels), DataError);

    const auto one = temp_file("ptrlab_idx_one_label", concat({be32(0x801), be32(1), {0}}));
    const auto two_images = temp_file("ptrlab_idx_two_images", concat({be32(0x803), be32(2), be32(1), be32(1), {1, 2}}));
    EXPECT_THROW(load_idx(two_images, one), DataError);
}

TEST(Csv, ParsesRowsAndRejectsGarbage)
{
    const auto path = std::filesystem::temp_directory_path() / "ptrlab_data.csv";
    std::ofstream(path) << "0, 1.5, -2\n2,0,1e-3\n\n1,3,4\n";
    const Dataset d = load_csv(path);
    ASSERT_EQ(d.size(), 3U);
    EXPECT_EQ(d.n_classes, 3U);
    EXPECT_DOUBLE_EQ(d.samples[1].x[1], 1e-3);
    EXPECT_EQ(d.samples[2].label, 1U);

    std::ofstream(path) << "0,1\n1,x\n";
    try {
        load_csv(path);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
    }
}

TEST(Split, StratifiedNinetyTen)
{
    const Dataset d = make_blobs(5, 20, 2, 1.0, 1.0, 1);
    const TrainValSplit s = split_train_val(d, 0.1, 4);
    EXPECT_EQ(s.train.size(), 90U);
    EXPECT_EQ(s.val.size(), 10U);
    std::map<std::size_t, int> per_class;
    for (const auto& x : s.val.samples)
        ++per_class[x.label];
    for (const auto& [label, count] : per_class)
        EXPECT_EQ(count, 2) << label;
    EXPECT_TRUE(s.warnings.empty());

    const TrainValSplit again = split_train_val(d, 0.1, 4);
    EXPECT_EQ(again.val.samples, s.val.samples);
    EXPECT_EQ(s.val.split, Split::Val);
}

TEST(Split, KeepsAtLeastOneTrainSamplePerClass)
{
    Dataset d;
    d.n_classes = 2;
    d.samples = {{Tensor({1}, 0.0), 0}, {Tensor({1}, 1.0), 0}, {Tensor({1}, 2.0), 1}};
    const TrainValSplit s = split_train_val(d, 0.9, 0);
    EXPECT_EQ(s.train.size(), 2U);
    EXPECT_EQ(s.val.size(), 1U);
    ASSERT_EQ(s.warnings.size(), 1U);
    EXPECT_NE(s.warnings[0].find("class 1"), std::string::npos);
}

TEST(Split, SingletonClassStaysInTrain)
{
    Dataset d;
    d.n_classes = 2;
    for (int i = 0; i < 19; ++i)
        d.samples.push_back({Tensor({1}, static_cast<double>(i)), 0});
    d.samples.push_back({Tensor({1}, -1.0), 1});
    const TrainValSplit s = split_train_val(d, 0.1, 2);
    EXPECT_EQ(s.val.size(), 2U);
    for (const auto& x : s.val.samples)
        EXPECT_EQ(x.label, 0U);
    EXPECT_EQ(s.train.samples.back().label, 1U);
    EXPECT_EQ(s.warnings.size(), 1U);
}

TEST(Augment, InactivePolicyIsIdentity)
{
    const Tensor img({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Rng rng(0);
    EXPECT_EQ(augment(img, AugmentPolicy{}, rng), img);
}

TEST(Augment, FlipAndShift)
{
    const Tensor img({1, 2, 2}, {1, 2, 3, 4});
    EXPECT_EQ(flip_horizontal(img), Tensor({1, 2, 2}, {2, 1, 4, 3}));
    EXPECT_EQ(shift_image(img, 0, 1), Tensor({1, 2, 2}, {0, 1, 0, 3}));
    EXPECT_EQ(shift_image(img, -1, 0), Tensor({1, 2, 2}, {3, 4, 0, 0}));
}

TEST(Augment, HotPixelMovesAtMostOne)
{
    Tensor img({1, 5, 5}, 0.0);
    img[12] = 1.0;
    Rng rng(6);
    for (int i = 0; i < 100; ++i) {
        const Tensor out = augment(img, AugmentPolicy{false, 1}, rng);
        double mass = 0.0;
        for (std::size_t p = 0; p < out.size(); ++p) {
            mass += out[p];
            if (out[p] != 0.0) {
                EXPECT_LE(std::abs(static_cast<int>(p / 5) - 2), 1);
                EXPECT_LE(std::abs(static_cast<int>(p % 5) - 2), 1);
            }
        }
        EXPECT_EQ(mass, 1.0);
    }
}

TEST(Augment, ShiftNeverAddsMass)
{
    Tensor img({2, 5, 5});
    for (std::size_t i = 0; i < img.size(); ++i)
        img[i] = 1.0 + static_cast<double>(i % 7);
    double total = 0.0;
    for (double v : img.values())
        total += v;
    Rng rng(3);
    const AugmentPolicy policy{true, 2};
    for (int i = 0; i < 50; ++i) {
        const Tensor out = augment(img, policy, rng);
        double sum = 0.0;
        for (double v : out.values())
            sum += v;
        EXPECT_LE(sum, total + 1e-12);
        EXPECT_EQ(out.shape(), img.shape());
    }
}
