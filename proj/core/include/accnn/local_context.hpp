#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "accnn/backbone.hpp"
#include "accnn/bbox.hpp"
#include "accnn/ops.hpp"
#include "accnn/params.hpp"

namespace accnn {

/// Multi-scale local context branch: crop the proposal at each scale factor,
/// RoI-max-pool, L2-normalize with a learnable channel scale, concatenate
/// along channels, reduce with a 1x1 conv, then two FC+ReLU layers.
struct LocalContextConfig {
  std::vector<double> scales{0.8, 1.2, 1.8};
  int pool_size = 7;
  int reduced_depth = 0;  // 0 keeps the cube depth
  std::vector<int> fc_dims{256, 256};
  double norm_scale_init = 1.0;

  void validate() const {
    if (scales.empty()) throw std::invalid_argument("LocalContextConfig: scales empty");
    for (std::size_t i = 1; i < scales.size(); ++i) {
      if (scales[i] <= scales[i - 1]) {
        throw std::invalid_argument("LocalContextConfig: scales must be strictly increasing");
      }
    }
    if (scales.front() <= 0) throw std::invalid_argument("LocalContextConfig: scales must be > 0");
    if (pool_size < 1) throw std::invalid_argument("LocalContextConfig: pool_size must be >= 1");
    if (fc_dims.size() != 2 || fc_dims[0] < 1 || fc_dims[1] < 1) {
      throw std::invalid_argument("LocalContextConfig: fc_dims must be two positive ints");
    }
  }
};

/// Grows a box about its center by factor lambda, then clips to the image.
/// The clipped result is widened to at least 1x1 pixels inside the image.
inline BBox scale_box(const BBox& box, double lambda, double img_w, double img_h) {
  if (lambda <= 0) throw std::invalid_argument("scale_box: scale factor must be positive");
  if (!box.intersects_image(img_w, img_h)) {
    throw std::invalid_argument("scale_box: box lies fully outside the image");
  }
  BBox scaled{box.cx, box.cy, box.w * lambda, box.h * lambda};
  double x1 = std::max(0.0, scaled.x1());
  double y1 = std::max(0.0, scaled.y1());
  double x2 = std::min(img_w, scaled.x2());
  double y2 = std::min(img_h, scaled.y2());
  if (x2 - x1 < 1.0) {
    const double c = std::clamp((x1 + x2) / 2, 0.5, img_w - 0.5);
    x1 = c - 0.5;
    x2 = c + 0.5;
  }
  if (y2 - y1 < 1.0) {
    const double c = std::clamp((y1 + y2) / 2, 0.5, img_h - 0.5);
    y1 = c - 0.5;
    y2 = c + 0.5;
  }
  return BBox::from_corners(x1, y1, x2, y2);
}

/// Cell range [c0, c1) covered by an image-space interval [lo, hi) at the
/// given stride; degenerate ranges snap to the nearest single cell.
inline std::pair<std::size_t, std::size_t> feature_span(double lo, double hi, int stride,
                                                        std::size_t cells) {
  long c0 = static_cast<long>(std::floor(lo / stride));
  long c1 = static_cast<long>(std::ceil(hi / stride));
  c0 = std::clamp(c0, 0L, static_cast<long>(cells) - 1);
  c1 = std::clamp(c1, c0 + 1, static_cast<long>(cells));
  if (c1 <= c0) {
    const long c = std::clamp(static_cast<long>(std::floor((lo + hi) / 2 / stride)), 0L,
                              static_cast<long>(cells) - 1);
    return {static_cast<std::size_t>(c), static_cast<std::size_t>(c) + 1};
  }
  return {static_cast<std::size_t>(c0), static_cast<std::size_t>(c1)};
}

/// RoI max pooling: map the box to feature cells, split into P x P bins by
/// proportional floor/ceil boundaries, take the max per bin and channel.
template <typename T>
Tensor<T> roi_pool(Tape<T>& tape, const FeatureCube<T>& cube, const BBox& box, int P) {
  if (P < 1) throw std::invalid_argument("roi_pool: P must be >= 1");
  auto [y0, y1] = feature_span(box.y1(), box.y2(), cube.stride, cube.height());
  auto [x0, x1] = feature_span(box.x1(), box.x2(), cube.stride, cube.width());
  return max_pool_region(tape, cube.data, y0, y1, x0, x1, static_cast<std::size_t>(P),
                         static_cast<std::size_t>(P));
}

/// Divides the pooled tensor by its global L2 norm, then multiplies channel d
/// by the learnable scale gamma_d. An all-zero input passes through as zeros.
template <typename T>
Tensor<T> l2_normalize_scale(Tape<T>& tape, const Tensor<T>& feat, const Tensor<T>& gamma) {
  if (feat.rank() != 3 || gamma.rank() != 1 || gamma.shape()[0] != feat.shape()[2]) {
    throw std::invalid_argument("l2_normalize_scale: gamma " + shape_str(gamma.shape()) +
                                " incompatible with feature " + shape_str(feat.shape()));
  }
  const std::size_t D = feat.shape()[2];
  const std::size_t n = feat.numel();
  T sumsq = T(0);
  for (std::size_t i = 0; i < n; ++i) sumsq += feat[i] * feat[i];
  const T norm = std::sqrt(sumsq);
  Tensor<T> y(feat.shape(), detail::needs_grad(tape, {&feat, &gamma}));
  if (norm > T(0)) {
    for (std::size_t i = 0; i < n; ++i) y[i] = gamma[i % D] * feat[i] / norm;
  }
  if (y.requires_grad()) {
    tape.record([feat = feat, gamma = gamma, y = y, norm = norm]() mutable {
      if (!(norm > T(0))) return;
      const std::size_t D = feat.shape()[2];
      const std::size_t n = feat.numel();
      auto gy = y.grad();
      if (gamma.requires_grad()) {
        auto gg = gamma.grad();
        for (std::size_t i = 0; i < n; ++i) gg[i % D] += gy[i] * feat[i] / norm;
      }
      if (feat.requires_grad()) {
        T s = T(0);
        for (std::size_t i = 0; i < n; ++i) s += gy[i] * gamma[i % D] * feat[i];
        auto gf = feat.grad();
        const T inv = T(1) / norm;
        const T inv3 = inv * inv * inv;
        for (std::size_t i = 0; i < n; ++i) {
          gf[i] += gamma[i % D] * gy[i] * inv - feat[i] * s * inv3;
        }
      }
    });
  }
  return y;
}

/// Channel-axis concat of the per-scale features followed by a 1x1 reduction.
template <typename T>
Tensor<T> fuse_multiscale(Tape<T>& tape, const std::vector<Tensor<T>>& feats, const Tensor<T>& W,
                          const Tensor<T>& b) {
  if (feats.empty()) throw std::invalid_argument("fuse_multiscale: no scale features");
  for (const auto& f : feats) {
    if (f.shape() != feats[0].shape()) {
      throw std::invalid_argument("fuse_multiscale: scale features disagree, " +
                                  shape_str(f.shape()) + " vs " + shape_str(feats[0].shape()));
    }
  }
  return conv1x1(tape, concat_channels(tape, feats), W, b);
}

template <typename T>
void init_local_params(ParamStore<T>& store, const LocalContextConfig& cfg, int depth,
                       std::mt19937_64& rng) {
  cfg.validate();
  const std::size_t D = static_cast<std::size_t>(depth);
  const std::size_t Dr = cfg.reduced_depth > 0 ? static_cast<std::size_t>(cfg.reduced_depth) : D;
  for (std::size_t i = 0; i < cfg.scales.size(); ++i) {
    store.add("local.scale" + std::to_string(i) + ".gamma",
              Tensor<T>::full({D}, static_cast<T>(cfg.norm_scale_init), true));
  }
  add_gaussian_param(store, "local.reduce.w", {Dr, cfg.scales.size() * D}, 0.01, rng);
  add_zero_param(store, "local.reduce.b", {Dr});
  const std::size_t P = static_cast<std::size_t>(cfg.pool_size);
  const std::size_t flat = P * P * Dr;
  add_gaussian_param(store, "local.fc1.w", {static_cast<std::size_t>(cfg.fc_dims[0]), flat}, 0.01,
                     rng);
  add_zero_param(store, "local.fc1.b", {static_cast<std::size_t>(cfg.fc_dims[0])});
  add_gaussian_param(store, "local.fc2.w",
                     {static_cast<std::size_t>(cfg.fc_dims[1]),
                      static_cast<std::size_t>(cfg.fc_dims[0])},
                     0.01, rng);
  add_zero_param(store, "local.fc2.b", {static_cast<std::size_t>(cfg.fc_dims[1])});
}

template <typename T>
struct ProposalFeatures {
  Tensor<T> f_local;                  // F_L
  std::vector<Tensor<T>> per_scale;   // pooled v_p^i, one per scale
};

template <typename T>
ProposalFeatures<T> local_feature(Tape<T>& tape, const FeatureCube<T>& cube, const BBox& box,
                                  const LocalContextConfig& cfg, const ParamStore<T>& params) {
  cfg.validate();
  ProposalFeatures<T> out;
  std::vector<Tensor<T>> normed;
  for (std::size_t i = 0; i < cfg.scales.size(); ++i) {
    const BBox sb = scale_box(box, cfg.scales[i], cube.image_w, cube.image_h);
    Tensor<T> pooled = roi_pool(tape, cube, sb, cfg.pool_size);
    out.per_scale.push_back(pooled);
    normed.push_back(
        l2_normalize_scale(tape, pooled, params.at("local.scale" + std::to_string(i) + ".gamma")));
  }
  Tensor<T> fused =
      fuse_multiscale(tape, normed, params.at("local.reduce.w"), params.at("local.reduce.b"));
  Tensor<T> flat = flatten(tape, fused);
  Tensor<T> h1 = relu(tape, affine(tape, flat, params.at("local.fc1.w"), params.at("local.fc1.b")));
  out.f_local =
      relu(tape, affine(tape, h1, params.at("local.fc2.w"), params.at("local.fc2.b")));
  return out;
}

}  // namespace accnn
