#include "accnn/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace accnn {

Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "minus_G" || s == "minus_g") return Variant::minus_g;
  if (s == "minus_L" || s == "minus_l") return Variant::minus_l;
  if (s == "avg_global") return Variant::avg_global;
  throw ConfigError("unknown variant: " + s + " (full, minus_G, minus_L, avg_global)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::minus_g: return "minus_G";
    case Variant::minus_l: return "minus_L";
    case Variant::avg_global: return "avg_global";
  }
  return "full";
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

const std::map<std::string, std::string>& default_entries() {
  static const std::map<std::string, std::string> defaults = {
      {"run.seed", "42"},
      {"run.out", "out"},
      {"run.variant", "full"},
      {"run.checkpoint", ""},

      {"data.corpus", ""},
      {"data.seed", "7"},
      {"data.train_images", "500"},
      {"data.test_images", "100"},
      {"data.image_size", "128"},
      {"data.min_objects", "1"},
      {"data.max_objects", "3"},
      {"data.min_size", "12"},
      {"data.max_size", "48"},
      {"data.occlusion_prob", "0.3"},
      {"data.proposals_per_image", "128"},
      {"data.autogen", "true"},
      {"data.parallel_gen", "1"},

      {"backbone.widths", "16,32,64,64"},
      {"backbone.stride", "8"},
      {"backbone.init_stddev", "0"},

      {"local.scales", "0.8,1.2,1.8"},
      {"local.pool_size", "7"},
      {"local.reduced_depth", "0"},
      {"local.fc_dims", "256,256"},
      {"local.norm_scale_init", "0"},

      {"global.k", "8"},
      {"global.t_steps", "3"},
      {"global.hidden", "0"},
      {"global.layers", "3"},
      {"global.fc_dims", "256,256"},

      {"head.nms_iou", "0.3"},
      {"head.score_threshold", "0.05"},
      {"head.normalize_targets", "true"},
      {"head.reg_weight", "1"},

      {"train.lr", "0.01"},
      {"train.iterations", "2000"},
      {"train.decay_step", "1200"},
      {"train.decay_factor", "0.1"},
      {"train.momentum", "0.9"},
      {"train.weight_decay", "0.0005"},
      {"train.batch_images", "2"},
      {"train.rois_per_image", "64"},
      {"train.fg_fraction", "0.25"},
      {"train.fg_iou", "0.5"},
      {"train.bg_iou_lo", "0"},
      {"train.bg_iou_hi", "0.5"},
      {"train.flip_prob", "0.5"},

      {"eval.ap_mode", "all-points"},
      {"eval.iou_thr", "0.5"},
      {"eval.split", "test"},

      {"attend.count", "8"},
      {"attend.upsample", "128"},

      {"ablate.variants", "full,minus_G,minus_L,avg_global"},
      {"ablate.scale_sets", "0.8+1.2;1.2+1.8;0.8+1.2+1.8;0.8+1.2+1.8+2.7"},
      {"ablate.seeds", "1,2,3"},
  };
  return defaults;
}

}  // namespace

RunConfig::RunConfig() : kv_(default_entries()) {}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError("unknown config key: " + key);
  it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError("unknown config key: " + key);
  return it->second;
}

int RunConfig::get_int(const std::string& key) const {
  try {
    return std::stoi(get(key));
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " is not an integer: " + get(key));
  }
}

double RunConfig::get_double(const std::string& key) const {
  try {
    return std::stod(get(key));
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " is not a number: " + get(key));
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key " + key + " is not a boolean: " + v);
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  try {
    return std::stoull(get(key));
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " is not an unsigned integer: " + get(key));
  }
}

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  std::istringstream ss(get(key));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " has a non-numeric entry: " + tok);
    }
  }
  return out;
}

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (double v : get_double_list(key)) out.push_back(static_cast<int>(v));
  return out;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

void RunConfig::apply_cli(const std::vector<std::string>& args) {
  static const std::map<std::string, std::string> aliases = {
      {"seed", "run.seed"},       {"out", "run.out"},
      {"variant", "run.variant"}, {"scales", "local.scales"},
      {"iters", "train.iterations"}, {"lr", "train.lr"},
      {"k-grid", "global.k"},     {"t-steps", "global.t_steps"},
      {"ap-mode", "eval.ap_mode"}, {"checkpoint", "run.checkpoint"},
      {"data", "data.corpus"},
  };
  // --config loads first, then everything else overrides in order.
  std::vector<std::pair<std::string, std::string>> pending;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string a = args[i];
    if (a.rfind("--", 0) != 0) throw ConfigError("unexpected argument: " + a);
    a = a.substr(2);
    std::string key, value;
    const auto eq = a.find('=');
    if (eq != std::string::npos) {
      key = a.substr(0, eq);
      value = a.substr(eq + 1);
    } else {
      key = a;
      if (i + 1 >= args.size()) throw ConfigError("flag --" + key + " expects a value");
      value = args[++i];
    }
    if (auto it = aliases.find(key); it != aliases.end()) key = it->second;
    if (key == "config") {
      load_file(value);
    } else {
      pending.emplace_back(key, value);
    }
  }
  for (const auto& [k, v] : pending) set(k, v);
}

SceneSpec scene_spec_from(const RunConfig& cfg) {
  SceneSpec spec;
  spec.width = cfg.get_int("data.image_size");
  spec.height = cfg.get_int("data.image_size");
  spec.min_objects = cfg.get_int("data.min_objects");
  spec.max_objects = cfg.get_int("data.max_objects");
  spec.min_size = cfg.get_double("data.min_size");
  spec.max_size = cfg.get_double("data.max_size");
  spec.occlusion_prob = cfg.get_double("data.occlusion_prob");
  spec.proposals_per_image = cfg.get_int("data.proposals_per_image");
  spec.validate();
  return spec;
}

BackboneConfig backbone_config_from(const RunConfig& cfg) {
  BackboneConfig b;
  b.widths = cfg.get_int_list("backbone.widths");
  b.stride = cfg.get_int("backbone.stride");
  b.init_stddev = cfg.get_double("backbone.init_stddev");
  if (b.widths.empty()) throw ConfigError("backbone.widths must not be empty");
  b.pool_stages();  // validates stride
  return b;
}

LocalContextConfig local_config_from(const RunConfig& cfg) {
  LocalContextConfig l;
  l.scales = cfg.get_double_list("local.scales");
  l.pool_size = cfg.get_int("local.pool_size");
  l.reduced_depth = cfg.get_int("local.reduced_depth");
  l.fc_dims = cfg.get_int_list("local.fc_dims");
  l.norm_scale_init = cfg.get_double("local.norm_scale_init");
  l.validate();
  return l;
}

GlobalConfig global_config_from(const RunConfig& cfg) {
  GlobalConfig g;
  g.k = cfg.get_int("global.k");
  g.t_steps = cfg.get_int("global.t_steps");
  g.hidden = cfg.get_int("global.hidden");
  g.layers = cfg.get_int("global.layers");
  g.fc_dims = cfg.get_int_list("global.fc_dims");
  g.validate();
  return g;
}

HeadConfig head_config_from(const RunConfig& cfg) {
  HeadConfig h;
  h.nms_iou = cfg.get_double("head.nms_iou");
  h.score_threshold = cfg.get_double("head.score_threshold");
  h.normalize_targets = cfg.get_bool("head.normalize_targets");
  h.reg_loss_weight = cfg.get_double("head.reg_weight");
  return h;
}

SamplerConfig sampler_config_from(const RunConfig& cfg) {
  SamplerConfig s;
  s.images_per_batch = cfg.get_int("train.batch_images");
  s.rois_per_image = cfg.get_int("train.rois_per_image");
  s.fg_fraction = cfg.get_double("train.fg_fraction");
  s.fg_iou = cfg.get_double("train.fg_iou");
  s.bg_iou_lo = cfg.get_double("train.bg_iou_lo");
  s.bg_iou_hi = cfg.get_double("train.bg_iou_hi");
  s.flip_prob = cfg.get_double("train.flip_prob");
  return s;
}

}  // namespace accnn
