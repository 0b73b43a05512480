#include "ptrlab/experiment.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = -1;
    std::string output;
};

CliRun run_cli(const std::string& args)
{
    static int calls = 0;
    const fs::path log = fs::temp_directory_path()
                         / ("ptrlab_cli_" + std::to_string(::getpid()) + "_" + std::to_string(calls++) + ".log");
    const std::string cmd = std::string(PTRLAB_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream in(log);
    std::stringstream text;
    text << in.rdbuf();
    in.close();
    fs::remove(log);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, text.str()};
}

fs::path write_config(const std::string& name, const nlohmann::json& j)
{
    const fs::path dir = fs::temp_directory_path() / "ptrlab_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    ptrlab::write_json(dir / "config.json", j);
    return dir / "config.json";
}

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
      "optimizer": {"lr": 0.05, "epochs": 2, "batch_size": 5},
      "ptr": {"loss_kind": "L2", "gate_T": 5},
      "data": {"source": "blobs", "n_classes": 3, "n_per_class": 10, "dim": 4,
               "class_separation": 3, "noise_sigma": 1, "seed": 2},
      "seeds": [3, 8],
      "output_dir": "out"
    })");
}

} // namespace

TEST(Cli, MissingKeyExitsWithConfigError)
{
    nlohmann::json j = tiny_config();
    j["optimizer"].erase("batch_size");
    const CliRun r = run_cli("train --config " + write_config("missing", j).string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("optimizer.batch_size"), std::string::npos) << r.output;
}

TEST(Cli, UnknownOptionIsConfigError)
{
    EXPECT_EQ(run_cli("train --bogus").code, 2);
}

TEST(Cli, TrainWritesOneDirectoryPerSeed)
{
    const fs::path config = write_config("train", tiny_config());
    const fs::path out = config.parent_path() / "run";
    const CliRun r = run_cli("train --config " + config.string() + " --out " + out.string());
    ASSERT_EQ(r.code, 0) << r.output;
    for (const char* seed : {"seed_3", "seed_8"}) {
        EXPECT_TRUE(fs::exists(out / seed / "report.json"));
        EXPECT_TRUE(fs::exists(out / seed / "report.csv"));
        EXPECT_TRUE(fs::exists(out / seed / "checkpoint.bin"));
    }
    std::ifstream in(out / "seed_3" / "report.json");
    const nlohmann::json report = nlohmann::json::parse(in);
    EXPECT_EQ(report.at("epochs").size(), 2U);
    EXPECT_EQ(report.at("config").at("seeds"), nlohmann::json::array({3, 8}));
    EXPECT_EQ(report.at("config"), ptrlab::to_json(ptrlab::parse_experiment_config(report.at("config"))));

    const CliRun ev = run_cli("eval --config " + config.string() + " --out " + (out / "eval").string()
                           + " --checkpoint " + (out / "seed_3" / "checkpoint.bin").string());
    ASSERT_EQ(ev.code, 0) << ev.output;
    std::ifstream eval_in(out / "eval" / "eval.json");
    EXPECT_EQ(nlohmann::json::parse(eval_in).at("accuracy"), report.at("final_val_accuracy"));

    const CliRun diag = run_cli("diagnose --config " + config.string() + " --out " + (out / "diag").string()
                             + " --checkpoint " + (out / "seed_3" / "checkpoint.bin").string() + " --baseline "
                             + (out / "seed_8" / "checkpoint.bin").string());
    ASSERT_EQ(diag.code, 0) << diag.output;
    EXPECT_TRUE(fs::exists(out / "diag" / "diagnostics.json"));
    EXPECT_TRUE(fs::exists(out / "diag" / "confusion_mass.csv"));
}

TEST(Cli, DryRunEchoesWithoutTraining)
{
    const fs::path config = write_config("dry", tiny_config());
    const fs::path out = config.parent_path() / "run";
    const CliRun r = run_cli("train --dry-run --config " + config.string() + " --out " + out.string());
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("\"representation_index\""), std::string::npos);
    EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, GradcheckAndToyPass)
{
    const fs::path out = fs::temp_directory_path() / "ptrlab_cli" / "checks";
    fs::remove_all(out);
    const CliRun g = run_cli("gradcheck --out " + out.string());
    EXPECT_EQ(g.code, 0) << g.output;
    std::ifstream gin(out / "gradcheck.json");
    EXPECT_LT(nlohmann::json::parse(gin).at("max_relative_error").get<double>(), 1e-4);

    const CliRun t = run_cli("toy --m 1 --out " + out.string());
    EXPECT_EQ(t.code, 0) << t.output;

    const CliRun c = run_cli("toy --fo const:0.5 --t const:1 --n 1000");
    EXPECT_EQ(c.code, 0) << c.output;
}
