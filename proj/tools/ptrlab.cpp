// ptrlab: train, compare and inspect pseudo-task regularized classifiers.

#include "ptrlab/diagnostics.hpp"
#include "ptrlab/errors.hpp"
#include "ptrlab/experiment.hpp"
#include "ptrlab/gradcheck.hpp"
#include "ptrlab/network_io.hpp"
#include "ptrlab/toy_lab.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

using namespace ptrlab;
namespace fs = std::filesystem;

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct CommonArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    bool dry_run = false;
    bool no_weight_decay = false;
    std::string out;
};

struct Loaded {
    ExperimentConfig config;
    fs::path base_dir;
};

Loaded load(const CommonArgs& args)
{
    Loaded l{load_experiment_config(args.config), fs::path(args.config).parent_path()};
    if (args.seed)
        l.config.seeds = {*args.seed};
    if (args.no_weight_decay)
        l.config.optimizer.use_weight_decay = false;
    if (!args.out.empty())
        l.config.output_dir = args.out;
    return l;
}

PreparedData load_data(const Loaded& l)
{
    PreparedData data = prepare_data(l.config.data, l.base_dir);
    for (const auto& w : data.warnings)
        std::cerr << "warning: " << w << '\n';
    return data;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true)
{
    auto* opt = cmd->add_option("--config", args.config, "Experiment JSON config");
    if (config_required)
        opt->required();
    cmd->add_option("--seed", args.seed, "Run a single seed instead of the configured list");
    cmd->add_option("--out", args.out, "Output directory (overrides output_dir)");
    cmd->add_flag("--no-weight-decay", args.no_weight_decay, "Disable weight decay");
}

std::string seed_dir(std::uint64_t seed)
{
    return "seed_" + std::to_string(seed);
}

int cmd_train(const CommonArgs& args)
{
    const Loaded l = load(args);
    if (args.dry_run) {
        std::cout << to_json(l.config).dump(2) << '\n';
        return 0;
    }
    const PreparedData data = load_data(l);
    const Network net(l.config.network);
    const fs::path out_dir(l.config.output_dir);
    for (std::uint64_t seed : l.config.seeds) {
        SeedRun run = train_one_seed(l.config, net, data, seed, l.config.ptr);
        const fs::path dir = out_dir / seed_dir(seed);
        fs::create_directories(dir);
        save_checkpoint(dir / "checkpoint.bin", run.result.final_state);
        run.result.report.checkpoint_path = "checkpoint.bin";
        nlohmann::json report = to_json(run.result.report);
        report["config"] = to_json(l.config);
        report["final_val_accuracy"] = run.val.accuracy;
        write_json(dir / "report.json", report);
        write_text(dir / "report.csv", epochs_csv(run.result.report));
        write_json(dir / "timing.json", {{"wall_seconds", run.result.report.wall_seconds}});
        std::cout << "seed " << seed << ": val accuracy " << run.val.accuracy << " -> " << dir.string() << '\n';
    }
    return 0;
}

int cmd_compare(const CommonArgs& args)
{
    const Loaded l = load(args);
    if (args.dry_run) {
        std::cout << to_json(l.config).dump(2) << '\n';
        return 0;
    }
    const PreparedData data = load_data(l);
    const ComparisonReport report = run_comparison(l.config, data);
    nlohmann::json j = to_json(report);
    j["config"] = to_json(l.config);
    const fs::path file = fs::path(l.config.output_dir) / "compare.json";
    write_json(file, j);
    std::cout << "baseline " << report.baseline_mean << " (" << report.baseline_std << "), " << report.loss_kind
              << " " << report.ptr_mean << " (" << report.ptr_std << "), gain " << report.gain
              << ", error-rate reduction " << report.error_rate_reduction << " -> " << file.string() << '\n';
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint)
{
    const Loaded l = load(args);
    const PreparedData data = load_data(l);
    const Network net(l.config.network);
    const Evaluation ev = evaluate(net, load_checkpoint(checkpoint, net), data.val);
    std::ostringstream csv;
    csv.precision(17);
    for (std::size_t i = 0; i < ev.probs.dim(0); ++i) {
        const auto row = ev.probs.row(i);
        csv << data.val.samples[i].label;
        for (double p : row)
            csv << ',' << p;
        csv << '\n';
    }
    const fs::path out_dir(l.config.output_dir);
    const nlohmann::json j{{"split", "val"}, {"n_samples", data.val.size()}, {"accuracy", ev.accuracy},
                           {"mean_entropy_bits", mean_entropy_bits(ev.probs)}};
    write_json(out_dir / "eval.json", j);
    write_text(out_dir / "probabilities.csv", csv.str());
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_diagnose(const CommonArgs& args, const std::string& checkpoint, const std::string& baseline)
{
    const Loaded l = load(args);
    const PreparedData data = load_data(l);
    const Network net(l.config.network);
    const auto labels = data.val.labels();
    const Evaluation ev = evaluate(net, load_checkpoint(checkpoint, net), data.val);
    std::optional<Evaluation> base;
    if (!baseline.empty())
        base = evaluate(net, load_checkpoint(baseline, net), data.val);
    const DiagnosticsReport report = diagnose(ev.probs, labels, base ? &base->probs : nullptr);
    const fs::path out_dir(l.config.output_dir);
    write_json(out_dir / "diagnostics.json", to_json(report));
    write_text(out_dir / "confusion_mass.csv", confusion_mass_csv(confusion_mass(ev.probs, labels)));
    std::cout << to_json(report).dump(2) << '\n';
    return 0;
}

struct GradcheckArgs {
    double epsilon = 1e-6;
    std::size_t batch = 4;
    double tolerance = 1e-4;
};

int cmd_gradcheck(const CommonArgs& args, const GradcheckArgs& g)
{
    NetworkSpec spec = default_gradcheck_network();
    std::uint64_t seed = args.seed.value_or(0);
    std::string out_dir = args.out;
    if (!args.config.empty()) {
        const Loaded l = load(args);
        spec = l.config.network;
        seed = l.config.seeds.front();
        out_dir = l.config.output_dir;
    }
    const Network net(spec);
    const NetworkState state = initial_state(net, seed);
    Rng rng = make_rng(seed, Stream::Data);
    Shape shape{g.batch};
    shape.insert(shape.end(), net.input_shape().begin(), net.input_shape().end());
    Tensor batch(shape);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : batch.values())
        v = normal(rng);
    std::vector<std::size_t> labels(g.batch);
    for (auto& y : labels)
        y = rng() % net.n_classes();

    const GradCheckResult r = finite_difference_check(net, state, batch, labels, g.epsilon);
    const bool passed = r.max_relative_error < g.tolerance;
    const nlohmann::json j{
        {"network", network_spec_to_json(spec)},
        {"seed", seed},
        {"epsilon", g.epsilon},
        {"max_relative_error", r.max_relative_error},
        {"parameters_checked", r.parameters_checked},
        {"tolerance", g.tolerance},
        {"passed", passed},
    };
    if (!out_dir.empty())
        write_json(fs::path(out_dir) / "gradcheck.json", j);
    std::cout << j.dump(2) << '\n';
    return passed ? 0 : kExitRuntime;
}

struct ToyArgs {
    std::string f_o = "uniform:0:1";
    std::string t = "uniform:0:2";
    double m = 1.0;
    std::size_t n = 1000000;
    std::uint64_t seed = 0;
    double tolerance = 0.03;
    double gap_tolerance = 0.05;
};

nlohmann::json variance_json(const VarianceResult& v)
{
    return {{"empirical_var", v.empirical_var},
            {"predicted_var", v.predicted_var},
            {"n_samples", v.n_samples},
            {"relative_gap", v.relative_gap}};
}

int cmd_toy(const CommonArgs& args, const ToyArgs& a)
{
    Sampler f_o, t;
    try {
        f_o = Sampler::parse(a.f_o);
        t = Sampler::parse(a.t);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("sampler", e.what());
    }
    if (a.m < 0.0)
        throw ConfigError("m", "must be non-negative");
    const std::uint64_t seed = args.seed.value_or(a.seed);
    const VarianceResult v = variance_experiment(f_o, t, a.n, seed);
    const FnpVsPtr cmp = fnp_vs_ptr_variance(f_o, a.m, a.n, seed);
    const double expected_gap = a.m * a.m / 3.0;
    const double gap_error = expected_gap > 0.0 ? std::abs(cmp.gap() - expected_gap) / expected_gap
                                                : std::abs(cmp.gap());
    const bool variance_ok = v.predicted_var > 0.0 ? v.relative_gap < a.tolerance : v.empirical_var == 0.0;
    const bool gap_ok = expected_gap > 0.0 ? gap_error < a.gap_tolerance : gap_error == 0.0;
    const nlohmann::json j{
        {"f_o", f_o.describe()},
        {"t", t.describe()},
        {"seed", seed},
        {"variance", variance_json(v)},
        {"fnp_vs_ptr",
         {{"m", a.m},
          {"fnp", variance_json(cmp.fnp)},
          {"ptr", variance_json(cmp.ptr)},
          {"gap", cmp.gap()},
          {"expected_gap", expected_gap},
          {"gap_relative_error", gap_error}}},
        {"passed", variance_ok && gap_ok},
    };
    if (!args.out.empty())
        write_json(fs::path(args.out) / "toy.json", j);
    std::cout << j.dump(2) << '\n';
    return variance_ok && gap_ok ? 0 : kExitRuntime;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Pseudo-task regularization lab"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string checkpoint, baseline;
    GradcheckArgs grad;
    ToyArgs toy;

    auto* train = app.add_subcommand("train", "Train one model per seed");
    add_common(train, common);
    train->add_flag("--dry-run", common.dry_run, "Validate and echo the config without training");

    auto* compare = app.add_subcommand("compare", "Paired baseline vs pseudo-task runs per seed");
    add_common(compare, common);
    compare->add_flag("--dry-run", common.dry_run, "Validate and echo the config without training");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the validation split");
    add_common(eval, common);
    eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();

    auto* diag = app.add_subcommand("diagnose", "Confusion mass, entropy and rectification analysis");
    add_common(diag, common);
    diag->add_option("--checkpoint", checkpoint, "Checkpoint of the regularized model")->required();
    diag->add_option("--baseline", baseline, "Checkpoint of the baseline model");

    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check");
    add_common(gradcheck, common, false);
    gradcheck->add_option("--epsilon", grad.epsilon, "Central difference step");
    gradcheck->add_option("--batch", grad.batch, "Batch size")->check(CLI::PositiveNumber);
    gradcheck->add_option("--tolerance", grad.tolerance, "Maximum relative error");

    auto* toy_cmd = app.add_subcommand("toy", "Single-neuron gradient variance experiment");
    add_common(toy_cmd, common, false);
    toy_cmd->add_option("--fo", toy.f_o, "Sampler for the neuron output (const:V | uniform:LO:HI)");
    toy_cmd->add_option("--t", toy.t, "Sampler for the regression target");
    toy_cmd->add_option("--m", toy.m, "Pseudo-target mean for the FNP comparison");
    toy_cmd->add_option("--n", toy.n, "Number of samples")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 40));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*train)
            return cmd_train(common);
        if (*compare)
            return cmd_compare(common);
        if (*eval)
            return cmd_eval(common, checkpoint);
        if (*diag)
            return cmd_diagnose(common, checkpoint, baseline);
        if (*gradcheck)
            return cmd_gradcheck(common, grad);
        if (*toy_cmd)
            return cmd_toy(common, toy);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitRuntime;
}
