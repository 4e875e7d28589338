#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "accnn/backbone.hpp"
#include "accnn/detection_head.hpp"
#include "accnn/eval.hpp"
#include "accnn/global_attention.hpp"
#include "accnn/local_context.hpp"
#include "accnn/synth_data.hpp"

namespace accnn {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Variant { full, minus_g, minus_l, avg_global };

Variant parse_variant(const std::string& s);
std::string variant_name(Variant v);

/// Flat key=value configuration. Keys carry a section prefix (train.lr) and
/// every key can be set from a file line, a --key=value flag, or one of the
/// short convenience flags. Unknown keys are a ConfigError.
class RunConfig {
 public:
  RunConfig();  // populated with defaults

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

  void load_file(const std::string& path);

  /// Parses CLI tokens after the subcommand: --key=value, --key value, and
  /// the convenience aliases (--seed, --out, --variant, --scales, --iters,
  /// --lr, --k-grid, --t-steps, --ap-mode, --config). A --config file is
  /// applied first, then the remaining flags override it.
  void apply_cli(const std::vector<std::string>& args);

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

// Typed views over the flat config.
SceneSpec scene_spec_from(const RunConfig& cfg);
BackboneConfig backbone_config_from(const RunConfig& cfg);
LocalContextConfig local_config_from(const RunConfig& cfg);
GlobalConfig global_config_from(const RunConfig& cfg);
HeadConfig head_config_from(const RunConfig& cfg);
SamplerConfig sampler_config_from(const RunConfig& cfg);

}  // namespace accnn
