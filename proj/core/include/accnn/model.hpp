#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "accnn/backbone.hpp"
#include "accnn/config.hpp"
#include "accnn/detection_head.hpp"
#include "accnn/global_attention.hpp"
#include "accnn/local_context.hpp"
#include "accnn/synth_data.hpp"

namespace accnn {

/// Full detector configuration plus the ablation variant, which rewires the
/// branches: minus_G drops the global branch entirely, minus_L collapses the
/// local branch to a single unit-scale crop, avg_global swaps attention for
/// average pooling.
struct ModelConfig {
  BackboneConfig backbone;
  LocalContextConfig local;
  GlobalConfig global;
  HeadConfig head;
  Variant variant = Variant::full;

  bool has_global() const { return variant != Variant::minus_g; }
  LocalContextConfig effective_local() const;
  GlobalConfig effective_global() const;

  static ModelConfig from_run_config(const RunConfig& cfg);
};

struct BatchLoss {
  Tensor<float> total;  // scalar graph output, mean over RoIs
  double loss = 0;
  double loss_cls = 0;
  double loss_reg = 0;
  int roi_count = 0;
  int fg_count = 0;
};

class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore<float>& params() { return params_; }
  const ParamStore<float>& params() const { return params_; }

  /// Builds the joint detection loss over one minibatch: shared backbone per
  /// image, one global feature per image reused by all its RoIs, local
  /// feature per RoI, classification over [F_L, F_G], regression from F_L.
  BatchLoss batch_loss(Tape<float>& tape, const MiniBatch& batch) const;

  /// Inference: class probabilities, per-class box decoding (undoing target
  /// normalization), score threshold, then per-class NMS.
  std::vector<Detection> detect(const Sample& sample) const;

  /// Attention maps l_1 .. l_{T+1} for one image; throws when the model has
  /// no attention branch (minus_G or average mode).
  std::vector<std::vector<double>> attention_maps(const Tensor<float>& image) const;

  bool has_attention() const;

  void set_target_stats(const std::array<double, 4>& mean, const std::array<double, 4>& stddev);
  std::pair<std::array<double, 4>, std::array<double, 4>> target_stats() const;

  /// Sets every per-scale L2-norm gamma to the given constant.
  void set_norm_gamma(std::size_t scale_index, double value);

 private:
  ModelConfig cfg_;
  ParamStore<float> params_;
};

}  // namespace accnn
