#include "accnn/train.hpp"

#include <cmath>
#include <iostream>

#include <json.hpp>

namespace accnn {

using nlohmann::json;

std::pair<std::array<double, 4>, std::array<double, 4>> compute_target_stats(
    const std::vector<Sample>& corpus, double fg_iou) {
  std::array<double, 4> sum{0, 0, 0, 0}, sumsq{0, 0, 0, 0};
  std::size_t n = 0;
  for (const Sample& s : corpus) {
    for (const BBox& p : s.proposals) {
      double best = 0.0;
      const GtBox* best_gt = nullptr;
      for (const GtBox& g : s.gts) {
        const double v = iou(p, g.box);
        if (v > best) {
          best = v;
          best_gt = &g;
        }
      }
      if (best > fg_iou && best_gt) {
        const auto t = encode_target(p, best_gt->box);
        for (std::size_t i = 0; i < 4; ++i) {
          sum[i] += t[i];
          sumsq[i] += t[i] * t[i];
        }
        ++n;
      }
    }
  }
  std::array<double, 4> mean{0, 0, 0, 0}, stddev{1, 1, 1, 1};
  if (n >= 2) {
    for (std::size_t i = 0; i < 4; ++i) {
      mean[i] = sum[i] / static_cast<double>(n);
      const double var = sumsq[i] / static_cast<double>(n) - mean[i] * mean[i];
      stddev[i] = std::sqrt(std::max(var, 1e-8));
    }
  }
  return {mean, stddev};
}

void calibrate_norm_gammas(Model& model, const std::vector<Sample>& corpus,
                           int warmup_proposals) {
  const LocalContextConfig local = model.config().effective_local();
  std::vector<double> norm_sum(local.scales.size(), 0.0);
  int counted = 0;
  for (const Sample& s : corpus) {
    if (counted >= warmup_proposals) break;
    Tape<float> tape;
    tape.set_recording(false);
    FeatureCube<float> cube =
        backbone_forward(tape, s.image, model.config().backbone, model.params());
    for (const BBox& p : s.proposals) {
      if (counted >= warmup_proposals) break;
      for (std::size_t i = 0; i < local.scales.size(); ++i) {
        const BBox sb = scale_box(p, local.scales[i], cube.image_w, cube.image_h);
        Tensor<float> pooled = roi_pool(tape, cube, sb, local.pool_size);
        double sumsq = 0.0;
        for (float v : pooled.values()) sumsq += static_cast<double>(v) * v;
        norm_sum[i] += std::sqrt(sumsq);
      }
      ++counted;
    }
  }
  if (counted == 0) throw std::invalid_argument("calibrate_norm_gammas: empty corpus");
  for (std::size_t i = 0; i < local.scales.size(); ++i) {
    const double mean_norm = norm_sum[i] / counted;
    model.set_norm_gamma(i, mean_norm > 0 ? mean_norm : 1.0);
  }
}

namespace {

json batch_dump(const MiniBatch& batch, const BatchLoss& loss) {
  json images = json::array();
  for (const ImageRois& img : batch.images) {
    json rois = json::array();
    for (const RoiSample& r : img.rois) {
      rois.push_back({{"box", {r.box.x1(), r.box.y1(), r.box.x2(), r.box.y2()}},
                      {"label", r.target.label},
                      {"target", r.target.target}});
    }
    images.push_back(
        {{"corpus_index", img.corpus_index}, {"flipped", img.flipped}, {"rois", rois}});
  }
  return json{{"loss", loss.loss},
              {"loss_cls", loss.loss_cls},
              {"loss_reg", loss.loss_reg},
              {"images", images}};
}

}  // namespace

TrainResult train_model(Model& model, const std::vector<Sample>& corpus, const TrainConfig& cfg,
                        std::ostream* log_stream) {
  TrainResult result;
  std::mt19937_64 rng(cfg.seed);
  auto& params = model.params();

  std::vector<std::vector<float>> velocity;
  for (auto& [name, t] : params) {
    velocity.emplace_back(t.requires_grad() ? t.numel() : 0, 0.0f);
  }

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const double lr_t =
        cfg.lr * std::pow(cfg.decay_factor, cfg.decay_step > 0 ? iter / cfg.decay_step : 0);
    params.zero_grad();
    MiniBatch batch = sample_minibatch(corpus, cfg.sampler, rng);
    result.refill_warnings += batch.refill_warnings;

    Tape<float> tape;
    BatchLoss loss = model.batch_loss(tape, batch);
    if (!std::isfinite(loss.loss)) {
      result.aborted_iter = iter;
      result.diagnostic = batch_dump(batch, loss).dump(2);
      return result;
    }
    tape.backward(loss.total);

    std::size_t k = 0;
    for (auto& [name, t] : params) {
      auto& v = velocity[k++];
      if (!t.requires_grad()) continue;
      auto w = t.values();
      auto g = t.grad();
      const float mu = static_cast<float>(cfg.momentum);
      const float wd = static_cast<float>(cfg.weight_decay);
      const float lr = static_cast<float>(lr_t);
      for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = mu * v[i] + g[i] + wd * w[i];
        w[i] -= lr * v[i];
      }
    }

    TrainLogEntry entry{iter, loss.loss, loss.loss_cls, loss.loss_reg, lr_t};
    result.log.push_back(entry);
    if (log_stream) {
      json line{{"iter", entry.iter},
                {"loss", entry.loss},
                {"loss_cls", entry.loss_cls},
                {"loss_reg", entry.loss_reg},
                {"lr", entry.lr}};
      (*log_stream) << line.dump() << "\n";
    }
  }
  return result;
}

}  // namespace accnn
