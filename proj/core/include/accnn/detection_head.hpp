#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "accnn/bbox.hpp"
#include "accnn/ops.hpp"
#include "accnn/params.hpp"

namespace accnn {

/// Class label and regression target for one RoI; g = 0 is background and
/// carries no target.
struct RoiTarget {
  int label = 0;
  std::array<double, 4> target{0, 0, 0, 0};
};

struct Detection {
  int class_id = 0;  // >= 1
  double score = 0;
  std::array<double, 4> box{0, 0, 0, 0};  // corner form x1, y1, x2, y2
  int image_id = 0;
};

struct HeadConfig {
  int num_classes = 3;  // foreground classes; labels run 0..num_classes
  double nms_iou = 0.3;
  double score_threshold = 0.05;
  bool normalize_targets = true;
  double reg_loss_weight = 1.0;
};

/// Classifier takes [F_L, F_G] (or F_L alone when no global branch exists);
/// the regressor sees F_L only, so no regression gradient can reach any
/// global-branch parameter.
template <typename T>
void init_head_params(ParamStore<T>& store, const HeadConfig& cfg, int local_dim, int global_dim,
                      std::mt19937_64& rng) {
  const std::size_t cls_in = static_cast<std::size_t>(local_dim + global_dim);
  const std::size_t n_cls = static_cast<std::size_t>(cfg.num_classes) + 1;
  add_gaussian_param(store, "head.cls.w", {n_cls, cls_in}, 0.01, rng);
  add_zero_param(store, "head.cls.b", {n_cls});
  add_gaussian_param(store, "head.reg.w",
                     {4 * static_cast<std::size_t>(cfg.num_classes),
                      static_cast<std::size_t>(local_dim)},
                     0.001, rng);
  add_zero_param(store, "head.reg.b", {4 * static_cast<std::size_t>(cfg.num_classes)});
  // Regression target statistics, filled before training when normalization
  // is on; identity otherwise. Not learned.
  store.add("head.target_mean", Tensor<T>::zeros({4}));
  store.add("head.target_std", Tensor<T>::full({4}, T(1)));
}

/// Raw class scores over K+1 classes from the concatenated features.
template <typename T>
Tensor<T> classify(Tape<T>& tape, const Tensor<T>& f_local,
                   const std::optional<Tensor<T>>& f_global, const ParamStore<T>& params) {
  Tensor<T> feat =
      f_global ? concat_vec(tape, {f_local, *f_global}) : f_local;
  return affine(tape, feat, params.at("head.cls.w"), params.at("head.cls.b"));
}

/// Per-class box deltas (4K outputs) from the local feature only.
template <typename T>
Tensor<T> regress(Tape<T>& tape, const Tensor<T>& f_local, const ParamStore<T>& params) {
  return affine(tape, f_local, params.at("head.reg.w"), params.at("head.reg.b"));
}

template <typename T>
struct LossTerms {
  Tensor<T> total;
  Tensor<T> cls;
  Tensor<T> reg;  // undefined handle for background RoIs
};

/// Joint loss: cross-entropy over the class scores plus, for foreground
/// only, the smooth-L1 penalty on the target class's four deltas. For g = 0
/// the regression term is never built, so its gradient paths do not exist.
template <typename T>
LossTerms<T> multitask_loss(Tape<T>& tape, const Tensor<T>& scores, const Tensor<T>& deltas,
                            const RoiTarget& target, const HeadConfig& cfg) {
  if (target.label < 0 || target.label > cfg.num_classes) {
    throw std::invalid_argument("multitask_loss: label " + std::to_string(target.label) +
                                " out of range 0.." + std::to_string(cfg.num_classes));
  }
  LossTerms<T> out;
  out.cls = cross_entropy_logits(tape, scores, static_cast<std::size_t>(target.label));
  if (target.label == 0) {
    out.total = out.cls;
    return out;
  }
  Tensor<T> class_deltas =
      slice_vec(tape, deltas, 4 * static_cast<std::size_t>(target.label - 1), 4);
  Tensor<T> t = Tensor<T>::from({4}, {static_cast<T>(target.target[0]),
                                      static_cast<T>(target.target[1]),
                                      static_cast<T>(target.target[2]),
                                      static_cast<T>(target.target[3])});
  out.reg = smooth_l1_sum(tape, sub(tape, class_deltas, t));
  Tensor<T> weighted = cfg.reg_loss_weight == 1.0
                           ? out.reg
                           : scale(tape, out.reg, static_cast<T>(cfg.reg_loss_weight));
  out.total = add(tape, out.cls, weighted);
  return out;
}

/// Fast-RCNN box parameterization of a ground-truth box against a proposal.
inline std::array<double, 4> encode_target(const BBox& proposal, const BBox& gt) {
  if (!proposal.valid() || !gt.valid()) {
    throw std::invalid_argument("encode_target: degenerate box");
  }
  return {(gt.cx - proposal.cx) / proposal.w, (gt.cy - proposal.cy) / proposal.h,
          std::log(gt.w / proposal.w), std::log(gt.h / proposal.h)};
}

/// Inverse of encode_target; clipping to image bounds is the caller's call.
inline BBox apply_deltas(const BBox& box, const std::array<double, 4>& t) {
  for (double v : t) {
    if (!std::isfinite(v)) throw std::invalid_argument("apply_deltas: non-finite delta");
  }
  return {box.cx + t[0] * box.w, box.cy + t[1] * box.h, box.w * std::exp(t[2]),
          box.h * std::exp(t[3])};
}

/// Greedy NMS over one class's detections: sort by score (ties keep input
/// order), keep a detection iff its IoU with every kept one is < iou_thr.
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_thr);

}  // namespace accnn
