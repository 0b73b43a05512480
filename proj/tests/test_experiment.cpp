#include "ptrlab/errors.hpp"
#include "ptrlab/experiment.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace ptrlab;

namespace {

nlohmann::json tiny_config()
{
    return nlohmann::json::parse(R"({
      "network": {
        "input_shape": [4],
        "layers": [
          {"type": "dense", "in": 4, "out": 8},
          {"type": "relu"},
          {"type": "dense", "in": 8, "out": 3}
        ],
        "representation_index": 1
      },
      "optimizer": {"lr": 0.05, "epochs": 3, "batch_size": 5},
      "ptr": {"loss_kind": "SML1", "gate_T": 5},
      "data": {"source": "blobs", "n_classes": 3, "n_per_class": 10, "dim": 4,
               "class_separation": 3, "noise_sigma": 1, "seed": 2, "val_fraction": 0.2},
      "seeds": [1, 2, 3, 4, 5]
    })");
}

std::string missing_key(const nlohmann::json& j)
{
    try {
        parse_experiment_config(j);
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "";
}

} // namespace

TEST(ExperimentConfig, RequiredKeysAreNamed)
{
    nlohmann::json j = tiny_config();
    j["optimizer"].erase("epochs");
    EXPECT_EQ(missing_key(j), "optimizer.epochs");

    j = tiny_config();
    j.erase("seeds");
    EXPECT_EQ(missing_key(j), "seeds");

    j = tiny_config();
    j["data"].erase("dim");
    EXPECT_EQ(missing_key(j), "data.dim");

    j = tiny_config();
    j["optimizer"]["learning_rate"] = 0.1;
    EXPECT_EQ(missing_key(j), "optimizer.learning_rate");

    j = tiny_config();
    j["ptr"]["loss_kind"] = "L1";
    EXPECT_EQ(missing_key(j), "ptr.loss_kind");
}

TEST(ExperimentConfig, DefaultsAndRoundTrip)
{
    const ExperimentConfig c = parse_experiment_config(tiny_config());
    EXPECT_EQ(c.optimizer.lr_milestones, default_milestones(3));
    EXPECT_DOUBLE_EQ(c.ptr.ratio, 3.0);
    EXPECT_EQ(c.ptr.loss_kind, RegressionKind::SmoothL1);
    const nlohmann::json echoed = to_json(c);
    EXPECT_EQ(to_json(parse_experiment_config(echoed)), echoed);

    nlohmann::json no_ptr = tiny_config();
    no_ptr.erase("ptr");
    EXPECT_FALSE(parse_experiment_config(no_ptr).ptr.loss_kind.has_value());
}

TEST(ExperimentConfig, InvalidJsonIsConfigError)
{
    const auto path = std::filesystem::temp_directory_path() / "ptrlab_bad_config.json";
    std::ofstream(path) << "{\"network\": ";
    EXPECT_THROW(load_experiment_config(path), ConfigError);
}

TEST(Comparison, ErrorRateReductionArithmetic)
{
    EXPECT_NEAR(100 * error_rate_reduction(0.8392, 0.0261), 16.23, 0.01);
    EXPECT_NEAR(100 * error_rate_reduction(0.7507, 0.0305), 12.23, 0.01);
    EXPECT_EQ(error_rate_reduction(0.5, 0.0), 0.0);
}

TEST(Comparison, SampleStddev)
{
    EXPECT_EQ(sample_stddev({0.7}), 0.0);
    EXPECT_NEAR(sample_stddev({1.0, 2.0, 3.0, 4.0}), std::sqrt(5.0 / 3.0), 1e-15);
}

TEST(Comparison, WithoutLossKindGainIsZero)
{
    nlohmann::json j = tiny_config();
    j["ptr"].erase("loss_kind");
    const ExperimentConfig c = parse_experiment_config(j);
    const ComparisonReport r = run_comparison(c, prepare_data(c.data));
    EXPECT_EQ(r.loss_kind, "none");
    EXPECT_EQ(r.gain, 0.0);
    EXPECT_EQ(r.mean_entropy_delta, 0.0);
    ASSERT_EQ(r.pairs.size(), 5U);
    for (const auto& p : r.pairs)
        EXPECT_TRUE(p.ptr_diagnostics.rectification->true_rectified.empty());
}

TEST(Comparison, PairedRunsShareStartingPoint)
{
    const ExperimentConfig c = parse_experiment_config(tiny_config());
    const ComparisonReport r = run_comparison(c, prepare_data(c.data));
    ASSERT_EQ(r.pairs.size(), 5U);
    for (const auto& p : r.pairs)
        EXPECT_EQ(p.baseline_epoch0_ce, p.ptr_epoch0_ce) << p.seed;
    const nlohmann::json j = to_json(r);
    EXPECT_EQ(j.at("pairs").size(), 5U);
    EXPECT_TRUE(j.contains("baseline_std"));
    EXPECT_TRUE(j.contains("error_rate_reduction"));
}

TEST(PrepareData, BlobsSplitSizes)
{
    const ExperimentConfig c = parse_experiment_config(tiny_config());
    const PreparedData d = prepare_data(c.data);
    EXPECT_EQ(d.train.size(), 24U);
    EXPECT_EQ(d.val.size(), 6U);
}
