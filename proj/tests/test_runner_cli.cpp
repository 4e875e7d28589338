#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include <json.hpp>

#include "accnn/eval.hpp"
#include "accnn/runner.hpp"

using namespace accnn;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

RunConfig tiny_run_config(const std::string& root) {
  RunConfig cfg;
  cfg.set("data.corpus", root + "/corpus");
  cfg.set("data.train_images", "8");
  cfg.set("data.test_images", "4");
  cfg.set("data.image_size", "64");
  cfg.set("data.min_size", "10");
  cfg.set("data.max_size", "28");
  cfg.set("data.max_objects", "2");
  cfg.set("data.proposals_per_image", "64");
  cfg.set("backbone.widths", "4,6");
  cfg.set("backbone.stride", "4");
  cfg.set("local.pool_size", "3");
  cfg.set("local.reduced_depth", "4");
  cfg.set("local.fc_dims", "16,16");
  cfg.set("global.k", "4");
  cfg.set("global.t_steps", "2");
  cfg.set("global.layers", "2");
  cfg.set("global.hidden", "6");
  cfg.set("global.fc_dims", "16,16");
  cfg.set("train.iterations", "10");
  cfg.set("train.rois_per_image", "16");
  cfg.set("train.lr", "0.01");
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("gen-data, train, eval, attend pipeline end to end") {
  const std::string root = (fs::temp_directory_path() / "accnn_runner_test").string();
  fs::remove_all(root);
  fs::create_directories(root);
  RunConfig cfg = tiny_run_config(root);

  // gen-data
  cfg.set("run.out", root + "/corpus");
  run_gen_data(cfg);
  CHECK(fs::exists(root + "/corpus/train/annotations.jsonl"));
  CHECK(fs::exists(root + "/corpus/test/proposals.jsonl"));
  CHECK(fs::exists(root + "/corpus/manifest.json"));

  // train
  cfg.set("run.out", root + "/run1");
  run_train(cfg);
  CHECK(fs::exists(root + "/run1/checkpoint.bin"));
  CHECK(fs::exists(root + "/run1/train_log.jsonl"));
  {
    const json manifest = json::parse(slurp(root + "/run1/manifest.json"));
    CHECK(manifest.at("command") == "train");
    CHECK(manifest.at("status") == "ok");
    CHECK(manifest.at("config").at("train.iterations") == "10");
  }

  // identical second run is bitwise identical
  cfg.set("run.out", root + "/run2");
  run_train(cfg);
  CHECK(slurp(root + "/run1/train_log.jsonl") == slurp(root + "/run2/train_log.jsonl"));
  CHECK(slurp(root + "/run1/checkpoint.bin") == slurp(root + "/run2/checkpoint.bin"));

  // eval writes a schema-complete report
  cfg.set("run.out", root + "/eval");
  cfg.set("run.checkpoint", root + "/run1/checkpoint.bin");
  const EvalOutputs out = run_eval(cfg);
  CHECK(fs::exists(out.metrics_path));
  CHECK(fs::exists(out.detections_path));
  CHECK(fs::exists(root + "/eval/fp_categories.csv"));
  {
    const json metrics = json::parse(slurp(out.metrics_path));
    CHECK(metrics.contains("map"));
    CHECK(metrics.contains("per_class_ap"));
    CHECK(metrics.contains("mode"));
    CHECK(metrics.at("mode") == "all-points");
    CHECK(metrics.at("map").get<double>() >= 0.0);
    CHECK(metrics.at("map").get<double>() <= 1.0);
  }
  // detections parse back
  const auto dets = read_detections_jsonl(out.detections_path);
  for (const auto& d : dets) {
    CHECK(d.class_id >= 1);
    CHECK(d.score >= 0.05);
  }

  // attend exports (T+1) maps per image in both formats
  cfg.set("run.out", root + "/maps");
  cfg.set("attend.count", "2");
  cfg.set("attend.upsample", "32");
  run_attend(cfg);
  int csvs = 0, pgms = 0;
  for (const auto& entry : fs::directory_iterator(root + "/maps/maps")) {
    const std::string p = entry.path().string();
    if (p.ends_with(".csv")) ++csvs;
    if (p.ends_with(".pgm")) ++pgms;
  }
  CHECK(csvs == 2 * 3);  // images x (T+1)
  CHECK(pgms == 2 * 3);
  // exported maps re-sum to 1
  for (const auto& entry : fs::directory_iterator(root + "/maps/maps")) {
    const std::string p = entry.path().string();
    if (!p.ends_with(".csv")) continue;
    const auto parsed = parse_attention_csv(p);
    double sum = 0;
    for (double v : parsed) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-6);
  }

  fs::remove_all(root);
}

TEST_CASE("attend refuses average-mode and global-free checkpoints") {
  const std::string root = (fs::temp_directory_path() / "accnn_attend_refuse").string();
  fs::remove_all(root);
  fs::create_directories(root);
  RunConfig cfg = tiny_run_config(root);
  cfg.set("run.out", root + "/corpus");
  run_gen_data(cfg);

  for (const char* variant : {"avg_global", "minus_G"}) {
    cfg.set("run.variant", variant);
    cfg.set("run.out", root + std::string("/train_") + variant);
    run_train(cfg);
    cfg.set("run.checkpoint", root + std::string("/train_") + variant + "/checkpoint.bin");
    cfg.set("run.out", root + std::string("/maps_") + variant);
    CHECK_THROWS_AS(run_attend(cfg), ConfigError);
  }
  fs::remove_all(root);
}

TEST_CASE("eval requires a checkpoint and a matching configuration") {
  const std::string root = (fs::temp_directory_path() / "accnn_eval_errors").string();
  fs::remove_all(root);
  fs::create_directories(root);
  RunConfig cfg = tiny_run_config(root);
  cfg.set("run.out", root + "/corpus");
  run_gen_data(cfg);

  cfg.set("run.out", root + "/eval");
  CHECK_THROWS_AS(run_eval(cfg), ConfigError);  // no checkpoint set

  cfg.set("run.out", root + "/train");
  run_train(cfg);
  cfg.set("run.checkpoint", root + "/train/checkpoint.bin");
  cfg.set("global.k", "8");  // mismatched shape vs the checkpoint
  cfg.set("run.out", root + "/eval2");
  CHECK_THROWS_AS(run_eval(cfg), std::runtime_error);
  fs::remove_all(root);
}

TEST_CASE("ablate writes one row per variant x seed") {
  const std::string root = (fs::temp_directory_path() / "accnn_ablate_test").string();
  fs::remove_all(root);
  fs::create_directories(root);
  RunConfig cfg = tiny_run_config(root);
  cfg.set("run.out", root + "/corpus");
  run_gen_data(cfg);

  cfg.set("run.out", root + "/ablate");
  cfg.set("train.iterations", "3");
  cfg.set("ablate.variants", "full,minus_G");
  cfg.set("ablate.scale_sets", "0.8+1.2");
  cfg.set("ablate.seeds", "1,2");
  run_ablate(cfg);

  std::ifstream csv(root + "/ablate/ablation.csv");
  REQUIRE(csv);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "variant,seed,map");
  int rows = 0;
  std::string line;
  while (std::getline(csv, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 6);  // (full, minus_G, minus_G(0.8+1.2)) x 2 seeds
  fs::remove_all(root);
}

TEST_CASE("CLI exit codes: 0 success, 2 config error, 3 numeric abort") {
  const std::string cli = ACCNN_CLI_PATH;
  const std::string root = (fs::temp_directory_path() / "accnn_cli_codes").string();
  fs::remove_all(root);
  fs::create_directories(root);
  auto run = [&](const std::string& args) {
    const int status = std::system((cli + " " + args + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  CHECK(run("bogus-subcommand") == 2);
  CHECK(run("train --no.such.key=1") == 2);
  CHECK(run("eval --out " + root + "/eval") == 2);  // missing checkpoint

  const std::string common =
      " --data.corpus=" + root + "/corpus --data.train_images=8 --data.test_images=4"
      " --data.image_size=64 --data.min_size=10 --data.max_size=28 --data.max_objects=2"
      " --data.proposals_per_image=64 --backbone.widths=4,6 --backbone.stride=4"
      " --local.pool_size=3 --local.reduced_depth=4 --local.fc_dims=16,16"
      " --global.k=4 --global.t_steps=2 --global.layers=2 --global.hidden=6"
      " --global.fc_dims=16,16 --train.rois_per_image=16";
  CHECK(run("gen-data --out " + root + "/corpus" + common) == 0);
  CHECK(run("train --out " + root + "/run --iters 5" + common) == 0);
  // an absurd learning rate overflows the parameters within a few steps
  CHECK(run("train --out " + root + "/blowup --iters 8 --lr 1e9" + common) == 3);
  CHECK(fs::exists(root + "/blowup/diagnostic.json"));
  fs::remove_all(root);
}
