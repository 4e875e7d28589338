#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "accnn/model.hpp"
#include "accnn/synth_data.hpp"

namespace accnn {

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int iterations = 2000;
  double lr = 0.001;
  int decay_step = 1200;
  double decay_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  SamplerConfig sampler;
  std::uint64_t seed = 42;
};

struct TrainLogEntry {
  int iter = 0;
  double loss = 0, loss_cls = 0, loss_reg = 0, lr = 0;
};

struct TrainResult {
  std::vector<TrainLogEntry> log;
  int aborted_iter = -1;    // >= 0 when a non-finite loss stopped training
  std::string diagnostic;   // JSON dump of the offending batch
  int refill_warnings = 0;
};

/// Mean and stddev of encoded regression targets over all foreground
/// proposal/GT pairs of the corpus.
std::pair<std::array<double, 4>, std::array<double, 4>> compute_target_stats(
    const std::vector<Sample>& corpus, double fg_iou);

/// Sets each scale's L2-norm gamma so the normalized output amplitude
/// matches the mean pre-normalization amplitude over warm-up proposals.
void calibrate_norm_gammas(Model& model, const std::vector<Sample>& corpus,
                           int warmup_proposals = 100);

/// SGD with momentum and weight decay over the joint loss. Appends one JSON
/// line per iteration to log_stream when given. Fully deterministic per
/// (model, corpus, config seed).
TrainResult train_model(Model& model, const std::vector<Sample>& corpus, const TrainConfig& cfg,
                        std::ostream* log_stream = nullptr);

}  // namespace accnn
