#include "accnn/runner.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "accnn/checkpoint.hpp"
#include "accnn/eval.hpp"

namespace accnn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json config_json(const RunConfig& cfg) {
  json j = json::object();
  for (const auto& [k, v] : cfg.entries()) j[k] = v;
  return j;
}

void write_manifest(const std::string& out_dir, const std::string& command, const RunConfig& cfg,
                    const std::vector<std::string>& artifacts, json extra = json::object()) {
  json m{{"command", command},
         {"config", config_json(cfg)},
         {"artifacts", artifacts},
         {"status", "ok"}};
  for (auto& [k, v] : extra.items()) m[k] = v;
  std::ofstream os(fs::path(out_dir) / "manifest.json");
  if (!os) throw std::runtime_error("cannot write manifest under " + out_dir);
  os << m.dump(2) << "\n";
}

void generate_and_save_corpus(const RunConfig& cfg, const std::string& dir) {
  const SceneSpec spec = scene_spec_from(cfg);
  const std::uint64_t seed = cfg.get_u64("data.seed");
  const int n_train = cfg.get_int("data.train_images");
  const int n_test = cfg.get_int("data.test_images");
  const int threads = std::max(1, cfg.get_int("data.parallel_gen"));
  // Disjoint seed streams and id ranges for the two splits.
  save_corpus((fs::path(dir) / "train").string(),
              generate_corpus(seed * 2 + 1, n_train, spec, 0, threads));
  save_corpus((fs::path(dir) / "test").string(),
              generate_corpus(seed * 2 + 2, n_test, spec, n_train, threads));
}

TrainConfig train_config_from(const RunConfig& cfg) {
  TrainConfig t;
  t.iterations = cfg.get_int("train.iterations");
  t.lr = cfg.get_double("train.lr");
  t.decay_step = cfg.get_int("train.decay_step");
  t.decay_factor = cfg.get_double("train.decay_factor");
  t.momentum = cfg.get_double("train.momentum");
  t.weight_decay = cfg.get_double("train.weight_decay");
  t.sampler = sampler_config_from(cfg);
  t.seed = cfg.get_u64("run.seed");
  return t;
}

Model build_model(const RunConfig& cfg) {
  return Model(ModelConfig::from_run_config(cfg), cfg.get_u64("run.seed"));
}

Model load_model(const RunConfig& cfg) {
  const std::string ckpt = cfg.get("run.checkpoint");
  if (ckpt.empty()) throw ConfigError("run.checkpoint is required");
  Model model = build_model(cfg);
  assign_from_checkpoint(model.params(), load_checkpoint(ckpt));
  return model;
}

std::vector<int> all_class_ids(const RunConfig& cfg) {
  (void)cfg;
  return {1, 2, 3};
}

std::map<int, std::vector<int>> similarity_sets() {
  // Triangles and squares are both polygons; circles stand alone.
  return {{1, {}}, {2, {3}}, {3, {2}}};
}

}  // namespace

std::vector<Sample> ensure_corpus_split(const RunConfig& cfg, const std::string& split) {
  const std::string dir = cfg.get("data.corpus");
  if (dir.empty()) throw ConfigError("data.corpus is required (or run gen-data first)");
  const fs::path split_dir = fs::path(dir) / split;
  if (!fs::exists(split_dir / "annotations.jsonl")) {
    if (!cfg.get_bool("data.autogen")) {
      throw ConfigError("corpus split missing: " + split_dir.string() +
                        " (data.autogen is off)");
    }
    generate_and_save_corpus(cfg, dir);
  }
  return load_corpus(split_dir.string());
}

void run_gen_data(const RunConfig& cfg) {
  const std::string out = cfg.get("run.out");
  fs::create_directories(out);
  generate_and_save_corpus(cfg, out);
  write_manifest(out, "gen-data", cfg,
                 {"train/images", "train/annotations.jsonl", "train/proposals.jsonl",
                  "test/images", "test/annotations.jsonl", "test/proposals.jsonl"});
}

void run_train(const RunConfig& cfg) {
  const std::string out = cfg.get("run.out");
  fs::create_directories(out);
  const std::vector<Sample> corpus = ensure_corpus_split(cfg, "train");

  Model model = build_model(cfg);
  if (cfg.get_bool("head.normalize_targets")) {
    const auto [mean, stddev] = compute_target_stats(corpus, cfg.get_double("train.fg_iou"));
    model.set_target_stats(mean, stddev);
  }
  if (cfg.get_double("local.norm_scale_init") <= 0) {
    calibrate_norm_gammas(model, corpus);
  }

  const std::string log_path = (fs::path(out) / "train_log.jsonl").string();
  std::ofstream log(log_path);
  if (!log) throw std::runtime_error("cannot open " + log_path);
  TrainResult result = train_model(model, corpus, train_config_from(cfg), &log);
  log.close();

  if (result.aborted_iter >= 0) {
    const std::string diag_path = (fs::path(out) / "diagnostic.json").string();
    std::ofstream diag(diag_path);
    diag << result.diagnostic << "\n";
    throw NumericError("training loss became non-finite at iteration " +
                       std::to_string(result.aborted_iter) + "; last batch dumped to " +
                       diag_path);
  }
  if (result.refill_warnings > 0) {
    std::cerr << "warning: minibatch quota refilled from jitter bucket "
              << result.refill_warnings << " times\n";
  }

  const std::string ckpt_path = (fs::path(out) / "checkpoint.bin").string();
  save_checkpoint(ckpt_path, model.params());
  write_manifest(out, "train", cfg, {"checkpoint.bin", "train_log.jsonl"},
                 json{{"iterations", result.log.size()},
                      {"final_loss", result.log.empty() ? 0.0 : result.log.back().loss}});
}

EvalOutputs run_eval(const RunConfig& cfg) {
  const std::string out = cfg.get("run.out");
  fs::create_directories(out);
  Model model = load_model(cfg);
  const std::vector<Sample> corpus = ensure_corpus_split(cfg, cfg.get("eval.split"));

  std::vector<Detection> dets;
  for (const Sample& s : corpus) {
    for (const Detection& d : model.detect(s)) dets.push_back(d);
  }
  EvalOutputs outputs;
  outputs.detections_path = (fs::path(out) / "detections.jsonl").string();
  write_detections_jsonl(outputs.detections_path, dets);

  const std::vector<GroundTruth> gts = ground_truth_from_corpus(corpus);
  const ApMode mode = parse_ap_mode(cfg.get("eval.ap_mode"));
  const double iou_thr = cfg.get_double("eval.iou_thr");
  outputs.map = mean_ap(dets, gts, all_class_ids(cfg), iou_thr, mode, &outputs.per_class,
                        &outputs.skipped);

  json per_class = json::object();
  for (const auto& [c, ap] : outputs.per_class) per_class[class_name(c)] = ap;
  json skipped = json::array();
  for (int c : outputs.skipped) skipped.push_back(class_name(c));
  json metrics{{"mode", ap_mode_name(mode)},
               {"iou_threshold", iou_thr},
               {"map", outputs.map},
               {"per_class_ap", per_class},
               {"skipped_classes", skipped}};
  outputs.metrics_path = (fs::path(out) / "metrics.json").string();
  {
    std::ofstream os(outputs.metrics_path);
    os << metrics.dump(2) << "\n";
  }

  const auto categories = categorize_false_positives(dets, gts, similarity_sets());
  {
    std::ofstream os(fs::path(out) / "fp_categories.csv");
    os << "class,cor,loc,sim,oth,bg\n";
    for (const auto& [c, counts] : categories) {
      os << class_name(c);
      for (int v : counts) os << "," << v;
      os << "\n";
    }
  }

  write_manifest(out, "eval", cfg, {"detections.jsonl", "metrics.json", "fp_categories.csv"},
                 json{{"map", outputs.map}});
  return outputs;
}

void run_attend(const RunConfig& cfg) {
  const std::string out = cfg.get("run.out");
  fs::create_directories(out);
  Model model = load_model(cfg);
  if (!model.has_attention()) {
    throw ConfigError("attend requires an attention-mode checkpoint; variant '" +
                      variant_name(model.config().variant) + "' has none");
  }
  if (!model.params().has("global.attn.w_loc")) {
    throw ConfigError("attend: checkpoint carries no attention tensors");
  }
  const std::vector<Sample> corpus = ensure_corpus_split(cfg, cfg.get("eval.split"));
  const int count = std::min<int>(cfg.get_int("attend.count"), static_cast<int>(corpus.size()));
  const int upsample = cfg.get_int("attend.upsample");
  const int K = model.config().global.k;

  fs::create_directories(fs::path(out) / "maps");
  std::vector<std::string> artifacts;
  for (int i = 0; i < count; ++i) {
    const Sample& s = corpus[static_cast<std::size_t>(i)];
    const auto maps = model.attention_maps(s.image);
    for (std::size_t t = 0; t < maps.size(); ++t) {
      char name[64];
      std::snprintf(name, sizeof(name), "maps/img_%05d_t%zu", s.image_id, t);
      const std::string stem = (fs::path(out) / name).string();
      export_attention_map(maps[t], K, stem, upsample);
      artifacts.push_back(std::string(name) + ".csv");
      artifacts.push_back(std::string(name) + ".pgm");
    }
  }
  write_manifest(out, "attend", cfg, artifacts,
                 json{{"images", count}, {"maps_per_image", model.config().global.t_steps + 1}});
}

void run_ablate(const RunConfig& cfg) {
  const std::string out = cfg.get("run.out");
  fs::create_directories(out);
  const std::vector<Sample> train_set = ensure_corpus_split(cfg, "train");
  const std::vector<Sample> test_set = ensure_corpus_split(cfg, "test");

  struct Row {
    std::string label;
    std::uint64_t seed;
    double map;
  };
  std::vector<Row> rows;

  auto run_one = [&](const std::string& label, const RunConfig& run_cfg, std::uint64_t seed) {
    RunConfig local_cfg = run_cfg;
    local_cfg.set("run.seed", std::to_string(seed));
    Model model = build_model(local_cfg);
    if (local_cfg.get_bool("head.normalize_targets")) {
      const auto [mean, stddev] =
          compute_target_stats(train_set, local_cfg.get_double("train.fg_iou"));
      model.set_target_stats(mean, stddev);
    }
    if (local_cfg.get_double("local.norm_scale_init") <= 0) {
      calibrate_norm_gammas(model, train_set);
    }
    TrainResult tr = train_model(model, train_set, train_config_from(local_cfg), nullptr);
    if (tr.aborted_iter >= 0) {
      throw NumericError("ablation run " + label + " diverged at iteration " +
                         std::to_string(tr.aborted_iter));
    }
    std::vector<Detection> dets;
    for (const Sample& s : test_set) {
      for (const Detection& d : model.detect(s)) dets.push_back(d);
    }
    const double map =
        mean_ap(dets, ground_truth_from_corpus(test_set), all_class_ids(local_cfg),
                local_cfg.get_double("eval.iou_thr"), parse_ap_mode(local_cfg.get("eval.ap_mode")));
    rows.push_back({label, seed, map});
    std::cerr << "ablate: " << label << " seed " << seed << " mAP " << map << "\n";
  };

  std::vector<std::uint64_t> seeds;
  for (int s : cfg.get_int_list("ablate.seeds")) seeds.push_back(static_cast<std::uint64_t>(s));

  // Sub-network ablation.
  {
    std::istringstream ss(cfg.get("ablate.variants"));
    std::string variant;
    while (std::getline(ss, variant, ',')) {
      if (variant.empty()) continue;
      RunConfig vcfg = cfg;
      vcfg.set("run.variant", variant);
      for (std::uint64_t seed : seeds) run_one(variant, vcfg, seed);
    }
  }
  // Scale-set ablation on the local branch alone (minus_G), mirroring the
  // scale-setting comparison.
  {
    std::istringstream ss(cfg.get("ablate.scale_sets"));
    std::string set;
    while (std::getline(ss, set, ';')) {
      if (set.empty()) continue;
      std::string scales = set;
      std::replace(scales.begin(), scales.end(), '+', ',');
      RunConfig scfg = cfg;
      scfg.set("run.variant", "minus_G");
      scfg.set("local.scales", scales);
      for (std::uint64_t seed : seeds) run_one("minus_G(" + set + ")", scfg, seed);
    }
  }

  const std::string csv_path = (fs::path(out) / "ablation.csv").string();
  {
    std::ofstream os(csv_path);
    os << "variant,seed,map\n";
    for (const Row& r : rows) os << r.label << "," << r.seed << "," << r.map << "\n";
  }
  write_manifest(out, "ablate", cfg, {"ablation.csv"});
}

}  // namespace accnn
