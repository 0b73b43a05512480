#include "ptrlab/experiment.hpp"

#include "ptrlab/errors.hpp"
#include "ptrlab/network_io.hpp"

#include "json_fields.hpp"
#include "overloaded.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

namespace ptrlab {
namespace {

using detail::Fields;
using detail::Overloaded;

OptimizerConfig parse_optimizer(const nlohmann::json& j)
{
    Fields f(j, "optimizer");
    f.only({"lr", "momentum", "weight_decay", "lr_milestones", "lr_decay_factor", "epochs", "batch_size",
            "use_weight_decay"});
    OptimizerConfig o;
    o.lr = f.number("lr");
    o.epochs = f.count("epochs");
    o.batch_size = f.count("batch_size");
    o.momentum = f.number("momentum", o.momentum);
    o.weight_decay = f.number("weight_decay", o.weight_decay);
    o.lr_decay_factor = f.number("lr_decay_factor", o.lr_decay_factor);
    o.use_weight_decay = f.flag("use_weight_decay", o.use_weight_decay);
    if (f.has("lr_milestones")) {
        for (auto m : f.counts("lr_milestones"))
            o.lr_milestones.push_back(m);
    } else {
        o.lr_milestones = default_milestones(o.epochs);
    }
    o.validate();
    return o;
}

PtrConfig parse_ptr(const nlohmann::json& j)
{
    Fields f(j, "ptr");
    f.only({"ratio_R", "target_mean_m", "gate_T", "loss_kind", "epsilon_norm"});
    PtrConfig p;
    p.ratio = f.number("ratio_R", p.ratio);
    p.target_mean = f.number("target_mean_m", p.target_mean);
    p.gate_threshold = f.number("gate_T", p.gate_threshold);
    p.epsilon_norm = f.number("epsilon_norm", p.epsilon_norm);
    if (f.has("loss_kind")) {
        try {
            p.loss_kind = regression_kind_from_string(f.text("loss_kind"));
        } catch (const ConfigError& e) {
            throw ConfigError(f.key_path("loss_kind"), e.what());
        }
    }
    p.validate();
    return p;
}

DataConfig parse_data(const nlohmann::json& j)
{
    Fields f(j, "data");
    DataConfig d;
    const std::string source = f.text("source");
    d.val_fraction = f.number("val_fraction", d.val_fraction);
    d.split_seed = f.count("split_seed", d.split_seed);
    if (!(d.val_fraction > 0.0 && d.val_fraction < 1.0))
        throw ConfigError(f.key_path("val_fraction"), "must lie in (0, 1)");
    if (source == "blobs") {
        f.only({"source", "val_fraction", "split_seed", "n_classes", "n_per_class", "dim", "class_separation",
                "noise_sigma", "seed"});
        BlobsSource b;
        b.n_classes = f.count("n_classes");
        b.n_per_class = f.count("n_per_class");
        b.dim = f.count("dim");
        b.class_separation = f.number("class_separation");
        b.noise_sigma = f.number("noise_sigma");
        b.seed = f.count("seed", 0);
        if (b.n_classes == 0 || b.n_per_class == 0 || b.dim == 0)
            throw ConfigError(f.key_path("n_classes"), "blob counts must be positive");
        if (b.noise_sigma < 0.0 || b.class_separation < 0.0)
            throw ConfigError(f.key_path("noise_sigma"), "separation and sigma must be non-negative");
        d.source = b;
    } else if (source == "idx") {
        f.only({"source", "val_fraction", "split_seed", "images", "labels"});
        d.source = IdxSource{f.text("images"), f.text("labels")};
    } else if (source == "csv") {
        f.only({"source", "val_fraction", "split_seed", "path"});
        d.source = CsvSource{f.text("path")};
    } else {
        throw ConfigError(f.key_path("source"), "expected blobs, idx or csv, got '" + source + "'");
    }
    return d;
}

AugmentPolicy parse_augment(const nlohmann::json& j)
{
    Fields f(j, "augment");
    f.only({"flip_horizontal", "max_shift_pixels"});
    return {f.flag("flip_horizontal", false), f.count("max_shift_pixels", 0)};
}

std::filesystem::path resolve(const std::string& path, const std::filesystem::path& base)
{
    const std::filesystem::path p(path);
    return p.is_absolute() || base.empty() ? p : base / p;
}

nlohmann::json paired_json(const PairedResult& p)
{
    return {
        {"seed", p.seed},
        {"baseline_accuracy", p.baseline_accuracy},
        {"ptr_accuracy", p.ptr_accuracy},
        {"accuracy_gain", p.ptr_accuracy - p.baseline_accuracy},
        {"baseline_entropy_bits", p.baseline_entropy_bits},
        {"ptr_entropy_bits", p.ptr_entropy_bits},
        {"entropy_delta_bits", p.ptr_entropy_bits - p.baseline_entropy_bits},
        {"baseline_epoch0_ce", p.baseline_epoch0_ce},
        {"ptr_epoch0_ce", p.ptr_epoch0_ce},
        {"baseline_diagnostics", to_json(p.baseline_diagnostics)},
        {"ptr_diagnostics", to_json(p.ptr_diagnostics)},
    };
}

} // namespace

ExperimentConfig parse_experiment_config(const nlohmann::json& j)
{
    Fields f(j, "");
    f.only({"network", "optimizer", "ptr", "data", "augment", "seeds", "output_dir"});
    ExperimentConfig c;
    c.network = network_spec_from_json(f.at("network"), "network");
    try {
        Network check(c.network);
    } catch (const ShapeError& e) {
        throw ConfigError("network", e.what());
    }
    c.optimizer = parse_optimizer(f.at("optimizer"));
    if (f.has("ptr"))
        c.ptr = parse_ptr(f.at("ptr"));
    c.data = parse_data(f.at("data"));
    if (f.has("augment"))
        c.augment = parse_augment(f.at("augment"));
    c.seeds = f.counts("seeds");
    if (c.seeds.empty())
        throw ConfigError("seeds", "at least one seed is required");
    c.output_dir = f.text("output_dir", c.output_dir);
    return c;
}

nlohmann::json to_json(const ExperimentConfig& c)
{
    const auto& o = c.optimizer;
    nlohmann::json ptr{
        {"ratio_R", c.ptr.ratio},
        {"target_mean_m", c.ptr.target_mean},
        {"gate_T", c.ptr.gate_threshold},
        {"epsilon_norm", c.ptr.epsilon_norm},
    };
    if (c.ptr.loss_kind)
        ptr["loss_kind"] = to_string(*c.ptr.loss_kind);

    nlohmann::json data = std::visit(
        Overloaded{
            [](const BlobsSource& b) {
                return nlohmann::json{{"source", "blobs"},
                                      {"n_classes", b.n_classes},
                                      {"n_per_class", b.n_per_class},
                                      {"dim", b.dim},
                                      {"class_separation", b.class_separation},
                                      {"noise_sigma", b.noise_sigma},
                                      {"seed", b.seed}};
            },
            [](const IdxSource& s) {
                return nlohmann::json{{"source", "idx"}, {"images", s.images}, {"labels", s.labels}};
            },
            [](const CsvSource& s) { return nlohmann::json{{"source", "csv"}, {"path", s.path}}; },
        },
        c.data.source);
    data["val_fraction"] = c.data.val_fraction;
    data["split_seed"] = c.data.split_seed;

    return {
        {"network", network_spec_to_json(c.network)},
        {"optimizer",
         {{"lr", o.lr},
          {"momentum", o.momentum},
          {"weight_decay", o.weight_decay},
          {"use_weight_decay", o.use_weight_decay},
          {"lr_milestones", o.lr_milestones},
          {"lr_decay_factor", o.lr_decay_factor},
          {"epochs", o.epochs},
          {"batch_size", o.batch_size}}},
        {"ptr", ptr},
        {"data", data},
        {"augment", {{"flip_horizontal", c.augment.flip_horizontal}, {"max_shift_pixels", c.augment.max_shift_pixels}}},
        {"seeds", c.seeds},
        {"output_dir", c.output_dir},
    };
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("config", "cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config", std::string("invalid JSON: ") + e.what());
    }
    return parse_experiment_config(j);
}

PreparedData prepare_data(const DataConfig& data, const std::filesystem::path& base_dir)
{
    const Dataset full = std::visit(
        Overloaded{
            [](const BlobsSource& b) {
                return make_blobs(b.n_classes, b.n_per_class, b.dim, b.class_separation, b.noise_sigma, b.seed);
            },
            [&](const IdxSource& s) { return load_idx(resolve(s.images, base_dir), resolve(s.labels, base_dir)); },
            [&](const CsvSource& s) { return load_csv(resolve(s.path, base_dir)); },
        },
        data.source);
    if (full.empty())
        throw DataError("dataset is empty");
    full.validate();
    TrainValSplit split = split_train_val(full, data.val_fraction, data.split_seed);
    return {std::move(split.train), std::move(split.val), std::move(split.warnings)};
}

NetworkState initial_state(const Network& net, std::uint64_t seed)
{
    Rng rng = make_rng(seed, Stream::Init);
    return init_state(net, rng);
}

SeedRun train_one_seed(const ExperimentConfig& config, const Network& net, const PreparedData& data,
                       std::uint64_t seed, const PtrConfig& ptr)
{
    OptimizerConfig opt = config.optimizer;
    opt.seed = seed;
    SeedRun run;
    run.result = run_training(net, initial_state(net, seed), data.train, data.val, ptr, opt, config.augment);
    run.val = evaluate(net, run.result.final_state, data.val);
    return run;
}

double error_rate_reduction(double baseline_accuracy, double gain)
{
    return gain / (1.0 - baseline_accuracy);
}

double sample_stddev(const std::vector<double>& values)
{
    if (values.size() < 2)
        return 0.0;
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values)
        ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

ComparisonReport summarize(std::string loss_kind, std::vector<PairedResult> pairs)
{
    ComparisonReport r;
    r.loss_kind = std::move(loss_kind);
    r.pairs = std::move(pairs);
    if (r.pairs.empty())
        return r;
    std::vector<double> base, reg;
    double delta_sum = 0.0;
    for (const auto& p : r.pairs) {
        base.push_back(p.baseline_accuracy);
        reg.push_back(p.ptr_accuracy);
        const double delta = p.ptr_entropy_bits - p.baseline_entropy_bits;
        delta_sum += delta;
        r.entropy_reduced_seeds += delta <= 0.0 ? 1 : 0;
    }
    const double n = static_cast<double>(r.pairs.size());
    r.baseline_mean = std::accumulate(base.begin(), base.end(), 0.0) / n;
    r.ptr_mean = std::accumulate(reg.begin(), reg.end(), 0.0) / n;
    r.baseline_std = sample_stddev(base);
    r.ptr_std = sample_stddev(reg);
    r.gain = r.ptr_mean - r.baseline_mean;
    r.error_rate_reduction = r.baseline_mean < 1.0 ? error_rate_reduction(r.baseline_mean, r.gain) : 0.0;
    r.mean_entropy_delta = delta_sum / n;
    return r;
}

nlohmann::json to_json(const ComparisonReport& r)
{
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : r.pairs)
        pairs.push_back(paired_json(p));
    return {
        {"loss_kind", r.loss_kind},
        {"pairs", pairs},
        {"baseline_mean", r.baseline_mean},
        {"baseline_std", r.baseline_std},
        {"ptr_mean", r.ptr_mean},
        {"ptr_std", r.ptr_std},
        {"accuracy_gain", r.gain},
        {"error_rate_reduction", r.error_rate_reduction},
        {"mean_entropy_delta_bits", r.mean_entropy_delta},
        {"entropy_reduced_seeds", r.entropy_reduced_seeds},
    };
}

ComparisonReport run_comparison(const ExperimentConfig& config, const PreparedData& data)
{
    const Network net(config.network);
    PtrConfig baseline_ptr = config.ptr;
    baseline_ptr.loss_kind.reset();

    std::vector<PairedResult> pairs;
    const auto labels = data.val.labels();
    for (std::uint64_t seed : config.seeds) {
        const SeedRun base = train_one_seed(config, net, data, seed, baseline_ptr);
        const SeedRun reg = train_one_seed(config, net, data, seed, config.ptr);
        PairedResult p;
        p.seed = seed;
        p.baseline_accuracy = base.val.accuracy;
        p.ptr_accuracy = reg.val.accuracy;
        p.baseline_entropy_bits = mean_entropy_bits(base.val.probs);
        p.ptr_entropy_bits = mean_entropy_bits(reg.val.probs);
        if (!base.result.report.epochs.empty()) {
            p.baseline_epoch0_ce = base.result.report.epochs.front().mean_ce;
            p.ptr_epoch0_ce = reg.result.report.epochs.front().mean_ce;
        }
        if (!labels.empty()) {
            p.baseline_diagnostics = diagnose(base.val.probs, labels);
            p.ptr_diagnostics = diagnose(reg.val.probs, labels, &base.val.probs);
        }
        pairs.push_back(std::move(p));
    }
    return summarize(config.ptr.loss_kind ? to_string(*config.ptr.loss_kind) : "none", std::move(pairs));
}

NetworkSpec default_gradcheck_network()
{
    return NetworkSpec{
        {6},
        {DenseLayer{6, 8}, ReluLayer{}, DenseLayer{8, 5}, ReluLayer{}, DenseLayer{5, 3}},
        3,
    };
}

void write_json(const std::filesystem::path& file, const nlohmann::json& j)
{
    write_text(file, j.dump(2) + "\n");
}

void write_text(const std::filesystem::path& file, const std::string& text)
{
    if (file.has_parent_path())
        std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot write " + file.string());
    out << text;
    if (!out)
        throw std::runtime_error("write failed for " + file.string());
}

} // namespace ptrlab
