#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "accnn/checkpoint.hpp"
#include "accnn/config.hpp"
#include "accnn/model.hpp"

using namespace accnn;
namespace fs = std::filesystem;

namespace {

std::string read_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

ModelConfig small_model_config() {
  ModelConfig cfg;
  cfg.backbone.widths = {4, 6};
  cfg.backbone.stride = 4;
  cfg.local.pool_size = 3;
  cfg.local.reduced_depth = 4;
  cfg.local.fc_dims = {8, 8};
  cfg.local.norm_scale_init = 1.0;
  cfg.global.k = 4;
  cfg.global.t_steps = 2;
  cfg.global.layers = 2;
  cfg.global.hidden = 6;
  cfg.global.fc_dims = {8, 8};
  return cfg;
}

}  // namespace

TEST_CASE("checkpoint save -> load -> save is byte identical") {
  Model model(small_model_config(), 7);
  const std::string dir = (fs::temp_directory_path() / "accnn_ckpt_test").string();
  fs::create_directories(dir);
  const std::string p1 = dir + "/a.bin", p2 = dir + "/b.bin";
  save_checkpoint(p1, model.params());
  ParamStore<float> loaded = load_checkpoint(p1);
  save_checkpoint(p2, loaded);
  CHECK(read_bytes(p1) == read_bytes(p2));
  fs::remove_all(dir);
}

TEST_CASE("checkpoint values survive the round trip exactly") {
  Model model(small_model_config(), 9);
  const std::string dir = (fs::temp_directory_path() / "accnn_ckpt_vals").string();
  fs::create_directories(dir);
  save_checkpoint(dir + "/m.bin", model.params());
  ParamStore<float> loaded = load_checkpoint(dir + "/m.bin");
  REQUIRE(loaded.size() == model.params().size());
  for (const auto& [name, t] : model.params()) {
    REQUIRE(loaded.has(name));
    const auto& lt = loaded.at(name);
    REQUIRE(lt.shape() == t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(lt[i] == t[i]);
  }
  fs::remove_all(dir);
}

TEST_CASE("bad magic is rejected") {
  const std::string dir = (fs::temp_directory_path() / "accnn_ckpt_bad").string();
  fs::create_directories(dir);
  {
    std::ofstream os(dir + "/bad.bin", std::ios::binary);
    os << "NOTRIGHT";
  }
  CHECK_THROWS_AS(load_checkpoint(dir + "/bad.bin"), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("minus_G checkpoints carry no global tensors and fail loudly in a full config") {
  ModelConfig cfg = small_model_config();
  cfg.variant = Variant::minus_g;
  Model minus_g(cfg, 3);
  for (const auto& [name, t] : minus_g.params()) {
    CHECK(name.rfind("global.", 0) != 0);
  }
  const std::string dir = (fs::temp_directory_path() / "accnn_ckpt_variant").string();
  fs::create_directories(dir);
  save_checkpoint(dir + "/minus_g.bin", minus_g.params());

  ModelConfig full_cfg = small_model_config();
  Model full(full_cfg, 3);
  try {
    assign_from_checkpoint(full.params(), load_checkpoint(dir + "/minus_g.bin"));
    FAIL("expected a named-tensor diff");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("missing in checkpoint") != std::string::npos);
    CHECK(msg.find("global.") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("shape mismatches name the offending tensor") {
  ModelConfig cfg = small_model_config();
  Model a(cfg, 3);
  cfg.global.k = 3;  // changes w_loc extents
  Model b(cfg, 3);
  const std::string dir = (fs::temp_directory_path() / "accnn_ckpt_shape").string();
  fs::create_directories(dir);
  save_checkpoint(dir + "/a.bin", a.params());
  try {
    assign_from_checkpoint(b.params(), load_checkpoint(dir + "/a.bin"));
    FAIL("expected a shape diff");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("shape mismatch") != std::string::npos);
    CHECK(msg.find("global.attn.w_loc") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("config defaults, file loading, and overrides") {
  RunConfig cfg;
  CHECK(cfg.get("train.lr") == "0.01");
  CHECK(cfg.get_int("train.iterations") == 2000);
  CHECK(cfg.get_double_list("local.scales") == std::vector<double>{0.8, 1.2, 1.8});

  const std::string path = (fs::temp_directory_path() / "accnn_cfg_test.cfg").string();
  {
    std::ofstream os(path);
    os << "# comment line\n";
    os << "train.lr = 0.01\n";
    os << "\n";
    os << "global.k=4\n";
  }
  cfg.load_file(path);
  CHECK(cfg.get_double("train.lr") == 0.01);
  CHECK(cfg.get_int("global.k") == 4);
  fs::remove(path);

  CHECK_THROWS_AS(cfg.set("no.such.key", "1"), ConfigError);
  CHECK_THROWS_AS(cfg.get("nonexistent"), ConfigError);
}

TEST_CASE("CLI flags mirror config keys and override the config file") {
  const std::string path = (fs::temp_directory_path() / "accnn_cfg_cli.cfg").string();
  {
    std::ofstream os(path);
    os << "train.lr=0.5\n";
    os << "run.seed=1\n";
  }
  RunConfig cfg;
  cfg.apply_cli({"--config", path, "--seed", "9", "--train.momentum=0.8", "--lr=0.25",
                 "--k-grid", "16", "--ap-mode=11-point"});
  CHECK(cfg.get_u64("run.seed") == 9);        // flag beats file
  CHECK(cfg.get_double("train.lr") == 0.25);  // alias beats file
  CHECK(cfg.get_double("train.momentum") == 0.8);
  CHECK(cfg.get_int("global.k") == 16);
  CHECK(cfg.get("eval.ap_mode") == "11-point");
  fs::remove(path);

  RunConfig bad;
  CHECK_THROWS_AS(bad.apply_cli({"--no.such.key=1"}), ConfigError);
  CHECK_THROWS_AS(bad.apply_cli({"positional"}), ConfigError);
  CHECK_THROWS_AS(bad.apply_cli({"--seed"}), ConfigError);
}

TEST_CASE("variant parsing round-trips") {
  CHECK(parse_variant("full") == Variant::full);
  CHECK(parse_variant("minus_G") == Variant::minus_g);
  CHECK(parse_variant("minus_L") == Variant::minus_l);
  CHECK(parse_variant("avg_global") == Variant::avg_global);
  CHECK_THROWS_AS(parse_variant("bogus"), ConfigError);
  CHECK(variant_name(Variant::minus_g) == "minus_G");
}

TEST_CASE("typed config views validate their sections") {
  RunConfig cfg;
  cfg.set("local.scales", "1.8,1.2");  // not increasing
  CHECK_THROWS_AS(local_config_from(cfg), std::invalid_argument);
  cfg.set("local.scales", "0.8,1.2,1.8");
  CHECK_NOTHROW(local_config_from(cfg));
  cfg.set("backbone.stride", "6");
  CHECK_THROWS_AS(backbone_config_from(cfg), std::invalid_argument);
}
