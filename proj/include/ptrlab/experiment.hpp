#pragma once

#include "ptrlab/data.hpp"
#include "ptrlab/diagnostics.hpp"
#include "ptrlab/network.hpp"
#include "ptrlab/pseudo_task.hpp"
#include "ptrlab/trainer.hpp"

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace ptrlab {

struct BlobsSource {
    std::size_t n_classes = 0;
    std::size_t n_per_class = 0;
    std::size_t dim = 0;
    double class_separation = 1.0;
    double noise_sigma = 1.0;
    std::uint64_t seed = 0;
};

struct IdxSource {
    std::string images;
    std::string labels;
};

struct CsvSource {
    std::string path;
};

struct DataConfig {
    std::variant<BlobsSource, IdxSource, CsvSource> source;
    double val_fraction = 0.1;
    std::uint64_t split_seed = 0;
};

struct ExperimentConfig {
    NetworkSpec network;
    OptimizerConfig optimizer;
    PtrConfig ptr;
    DataConfig data;
    AugmentPolicy augment;
    std::vector<std::uint64_t> seeds;
    std::string output_dir = "ptrlab_out";
};

/// Strict parse: unknown keys and missing required keys raise ConfigError
/// naming the key. Relative data paths are kept as written.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& config);

/// Reads and parses a config file; JSON syntax errors become ConfigError.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct PreparedData {
    Dataset train;
    Dataset val;
    std::vector<std::string> warnings;
};

/// Builds or loads the dataset and splits off validation. Relative file
/// paths resolve against `base_dir`.
PreparedData prepare_data(const DataConfig& data, const std::filesystem::path& base_dir = {});

/// Initial parameters for one seed; shared by paired runs.
NetworkState initial_state(const Network& net, std::uint64_t seed);

struct SeedRun {
    TrainResult result;
    Evaluation val;
};

SeedRun train_one_seed(const ExperimentConfig& config, const Network& net, const PreparedData& data,
                       std::uint64_t seed, const PtrConfig& ptr);

struct PairedResult {
    std::uint64_t seed = 0;
    double baseline_accuracy = 0.0;
    double ptr_accuracy = 0.0;
    double baseline_entropy_bits = 0.0;
    double ptr_entropy_bits = 0.0;
    double baseline_epoch0_ce = 0.0;
    double ptr_epoch0_ce = 0.0;
    DiagnosticsReport baseline_diagnostics;
    DiagnosticsReport ptr_diagnostics; // carries rectification against the baseline
};

struct ComparisonReport {
    std::string loss_kind; // "none" when the pseudo-task is disabled
    std::vector<PairedResult> pairs;
    double baseline_mean = 0.0;
    double baseline_std = 0.0;
    double ptr_mean = 0.0;
    double ptr_std = 0.0;
    double gain = 0.0;
    double error_rate_reduction = 0.0;
    double mean_entropy_delta = 0.0;     // ptr - baseline, bits
    std::size_t entropy_reduced_seeds = 0; // seeds with delta <= 0
};

/// gain / (1 - baseline_accuracy); accuracies as fractions.
double error_rate_reduction(double baseline_accuracy, double gain);

/// Sample standard deviation (n - 1); 0 for fewer than two values.
double sample_stddev(const std::vector<double>& values);

ComparisonReport summarize(std::string loss_kind, std::vector<PairedResult> pairs);
nlohmann::json to_json(const ComparisonReport& report);

/// Paired baseline / pseudo-task runs for every seed of `config`.
ComparisonReport run_comparison(const ExperimentConfig& config, const PreparedData& data);

/// Small MLP used by `gradcheck` when no network is configured.
NetworkSpec default_gradcheck_network();

/// Writes `j` as indented JSON followed by a newline.
void write_json(const std::filesystem::path& file, const nlohmann::json& j);
void write_text(const std::filesystem::path& file, const std::string& text);

} // namespace ptrlab
