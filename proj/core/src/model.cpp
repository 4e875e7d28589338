#include "accnn/model.hpp"

#include <cmath>

namespace accnn {

LocalContextConfig ModelConfig::effective_local() const {
  LocalContextConfig l = local;
  if (variant == Variant::minus_l) l.scales = {1.0};
  return l;
}

GlobalConfig ModelConfig::effective_global() const {
  GlobalConfig g = global;
  g.mode = variant == Variant::avg_global ? GlobalMode::average : GlobalMode::attention;
  return g;
}

ModelConfig ModelConfig::from_run_config(const RunConfig& cfg) {
  ModelConfig m;
  m.backbone = backbone_config_from(cfg);
  m.local = local_config_from(cfg);
  m.global = global_config_from(cfg);
  m.head = head_config_from(cfg);
  m.variant = parse_variant(cfg.get("run.variant"));
  return m;
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  std::mt19937_64 rng(seed);
  init_backbone_params(params_, cfg_.backbone, rng);
  LocalContextConfig local = cfg_.effective_local();
  if (local.norm_scale_init <= 0) local.norm_scale_init = 1.0;  // calibrated before training
  const int depth = cfg_.backbone.depth();
  init_local_params(params_, local, depth, rng);
  if (cfg_.has_global()) {
    init_global_params(params_, cfg_.effective_global(), depth, rng);
  }
  const int local_dim = local.fc_dims[1];
  const int global_dim = cfg_.has_global() ? cfg_.global.fc_dims[1] : 0;
  init_head_params(params_, cfg_.head, local_dim, global_dim, rng);
}

bool Model::has_attention() const {
  return cfg_.has_global() && cfg_.variant != Variant::avg_global;
}

void Model::set_target_stats(const std::array<double, 4>& mean,
                             const std::array<double, 4>& stddev) {
  auto& m = params_.at("head.target_mean");
  auto& s = params_.at("head.target_std");
  for (int i = 0; i < 4; ++i) {
    m[static_cast<std::size_t>(i)] = static_cast<float>(mean[static_cast<std::size_t>(i)]);
    s[static_cast<std::size_t>(i)] = static_cast<float>(stddev[static_cast<std::size_t>(i)]);
  }
}

std::pair<std::array<double, 4>, std::array<double, 4>> Model::target_stats() const {
  const auto& m = params_.at("head.target_mean");
  const auto& s = params_.at("head.target_std");
  std::array<double, 4> mean, stddev;
  for (std::size_t i = 0; i < 4; ++i) {
    mean[i] = m[i];
    stddev[i] = s[i];
  }
  return {mean, stddev};
}

void Model::set_norm_gamma(std::size_t scale_index, double value) {
  auto& g = params_.at("local.scale" + std::to_string(scale_index) + ".gamma");
  for (auto& v : g.values()) v = static_cast<float>(value);
}

BatchLoss Model::batch_loss(Tape<float>& tape, const MiniBatch& batch) const {
  const LocalContextConfig local = cfg_.effective_local();
  const GlobalConfig global = cfg_.effective_global();
  const auto [t_mean, t_std] = target_stats();
  const ParamStore<float>& params = params_;

  BatchLoss out;
  std::vector<Tensor<float>> totals;
  for (const ImageRois& img : batch.images) {
    FeatureCube<float> cube = backbone_forward(tape, img.image, cfg_.backbone, params);
    std::optional<Tensor<float>> f_global;
    if (cfg_.has_global()) {
      f_global = global_feature(tape, cube, global, params).f_global;
    }
    for (const RoiSample& roi : img.rois) {
      ProposalFeatures<float> pf = local_feature(tape, cube, roi.box, local, params);
      Tensor<float> scores = classify(tape, pf.f_local, f_global, params);
      Tensor<float> deltas;
      RoiTarget target = roi.target;
      if (target.label > 0) {
        deltas = regress(tape, pf.f_local, params);
        if (cfg_.head.normalize_targets) {
          for (std::size_t i = 0; i < 4; ++i) {
            target.target[i] = (target.target[i] - t_mean[i]) / t_std[i];
          }
        }
        ++out.fg_count;
      }
      LossTerms<float> terms = multitask_loss(tape, scores, deltas, target, cfg_.head);
      totals.push_back(terms.total);
      out.loss_cls += terms.cls[0];
      if (terms.reg.defined()) out.loss_reg += terms.reg[0];
      ++out.roi_count;
    }
  }
  if (totals.empty()) throw std::invalid_argument("batch_loss: empty minibatch");
  out.total = scale(tape, add_many(tape, totals), 1.0f / static_cast<float>(out.roi_count));
  out.loss = out.total[0];
  out.loss_cls /= out.roi_count;
  out.loss_reg /= out.roi_count;
  return out;
}

std::vector<Detection> Model::detect(const Sample& sample) const {
  Tape<float> tape;
  tape.set_recording(false);
  const LocalContextConfig local = cfg_.effective_local();
  const GlobalConfig global = cfg_.effective_global();
  const auto [t_mean, t_std] = target_stats();
  const ParamStore<float>& params = params_;

  FeatureCube<float> cube = backbone_forward(tape, sample.image, cfg_.backbone, params);
  std::optional<Tensor<float>> f_global;
  if (cfg_.has_global()) {
    f_global = global_feature(tape, cube, global, params).f_global;
  }

  const int num_classes = cfg_.head.num_classes;
  std::vector<std::vector<Detection>> per_class(static_cast<std::size_t>(num_classes) + 1);
  const double img_w = cube.image_w, img_h = cube.image_h;
  for (const BBox& proposal : sample.proposals) {
    ProposalFeatures<float> pf = local_feature(tape, cube, proposal, local, params);
    Tensor<float> scores = classify(tape, pf.f_local, f_global, params);
    Tensor<float> probs = softmax(tape, scores);
    Tensor<float> deltas = regress(tape, pf.f_local, params);
    for (int c = 1; c <= num_classes; ++c) {
      const double score = probs[static_cast<std::size_t>(c)];
      if (score < cfg_.head.score_threshold) continue;
      std::array<double, 4> t;
      for (std::size_t i = 0; i < 4; ++i) {
        double v = deltas[4 * static_cast<std::size_t>(c - 1) + i];
        if (cfg_.head.normalize_targets) v = v * t_std[i] + t_mean[i];
        t[i] = v;
      }
      BBox refined = apply_deltas(proposal, t);
      if (!refined.intersects_image(img_w, img_h)) continue;
      refined = clip_to_image(refined, img_w, img_h);
      if (refined.w < 1 || refined.h < 1) continue;
      Detection d;
      d.class_id = c;
      d.score = score;
      d.box = refined.corners();
      d.image_id = sample.image_id;
      per_class[static_cast<std::size_t>(c)].push_back(d);
    }
  }
  std::vector<Detection> out;
  for (int c = 1; c <= num_classes; ++c) {
    for (const Detection& d : nms(per_class[static_cast<std::size_t>(c)], cfg_.head.nms_iou)) {
      out.push_back(d);
    }
  }
  return out;
}

std::vector<std::vector<double>> Model::attention_maps(const Tensor<float>& image) const {
  if (!has_attention()) {
    throw std::runtime_error(
        "attention_maps: model variant '" + variant_name(cfg_.variant) +
        "' has no attention branch (average pooling or no global context)");
  }
  Tape<float> tape;
  tape.set_recording(false);
  FeatureCube<float> cube = backbone_forward(tape, image, cfg_.backbone, params_);
  GlobalResult<float> res = global_feature(tape, cube, cfg_.effective_global(), params_);
  std::vector<std::vector<double>> out;
  for (const Tensor<float>& m : res.maps) {
    std::vector<double> vals(m.numel());
    for (std::size_t i = 0; i < m.numel(); ++i) vals[i] = m[i];
    out.push_back(std::move(vals));
  }
  return out;
}

}  // namespace accnn
