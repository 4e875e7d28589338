#pragma once

#include <map>
#include <string>
#include <vector>

#include "accnn/config.hpp"
#include "accnn/model.hpp"
#include "accnn/train.hpp"

namespace accnn {

/// Loads the corpus split from data.corpus, generating and persisting it
/// first when the directory is missing and data.autogen is on.
std::vector<Sample> ensure_corpus_split(const RunConfig& cfg, const std::string& split);

struct EvalOutputs {
  double map = 0;
  std::map<int, double> per_class;
  std::vector<int> skipped;
  std::string metrics_path;
  std::string detections_path;
};

// Subcommand entry points. Each writes its artifacts plus a manifest.json
// under run.out. ConfigError means a bad config (exit 2), NumericError a
// diverged training run (exit 3).
void run_gen_data(const RunConfig& cfg);
void run_train(const RunConfig& cfg);
EvalOutputs run_eval(const RunConfig& cfg);
void run_attend(const RunConfig& cfg);
void run_ablate(const RunConfig& cfg);

}  // namespace accnn
