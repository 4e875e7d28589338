#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "accnn/ops.hpp"
#include "accnn/params.hpp"
#include "accnn/tensor.hpp"

namespace accnn {

/// Shared feature map: (H_f, W_f, D) activations plus the image-to-feature
/// stride, with H_f = ceil(image_h / stride).
template <typename T>
struct FeatureCube {
  Tensor<T> data;
  int stride = 1;
  double image_w = 0;  // source image extents, for box clipping
  double image_h = 0;

  std::size_t height() const { return data.shape()[0]; }
  std::size_t width() const { return data.shape()[1]; }
  std::size_t depth() const { return data.shape()[2]; }
};

/// Small trainable conv trunk. Each stage is a 3x3 same conv + ReLU; the
/// first log2(stride) stages are followed by a 2x2 max pool, so the output
/// grid is ceil(H / stride) x ceil(W / stride) and the depth is the last
/// stage width.
struct BackboneConfig {
  std::vector<int> widths{16, 32, 64, 64};
  int stride = 8;
  // <= 0 selects fan-in-scaled Gaussian init; a positive value is used as a
  // fixed stddev for every stage.
  double init_stddev = 0.0;

  int depth() const { return widths.back(); }

  int pool_stages() const {
    if (stride < 1 || (stride & (stride - 1)) != 0) {
      throw std::invalid_argument("BackboneConfig: stride must be a positive power of two");
    }
    int n = 0;
    for (int s = stride; s > 1; s >>= 1) ++n;
    if (n > static_cast<int>(widths.size())) {
      throw std::invalid_argument("BackboneConfig: stride needs more pool stages than convs");
    }
    return n;
  }
};

template <typename T>
void init_backbone_params(ParamStore<T>& store, const BackboneConfig& cfg, std::mt19937_64& rng) {
  int c_in = 3;
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
    const int c_out = cfg.widths[i];
    const double fan_in = 9.0 * c_in;
    const double stddev = cfg.init_stddev > 0 ? cfg.init_stddev : std::sqrt(2.0 / fan_in);
    add_gaussian_param(store, "backbone.stage" + std::to_string(i) + ".w",
                       {static_cast<std::size_t>(c_out), 3, 3, static_cast<std::size_t>(c_in)},
                       stddev, rng);
    add_zero_param(store, "backbone.stage" + std::to_string(i) + ".b",
                   {static_cast<std::size_t>(c_out)});
    c_in = c_out;
  }
}

template <typename T>
FeatureCube<T> backbone_forward(Tape<T>& tape, const Tensor<T>& image, const BackboneConfig& cfg,
                                const ParamStore<T>& params) {
  if (image.rank() != 3 || image.shape()[2] != 3) {
    throw std::invalid_argument("backbone_forward: expected (H, W, 3) image, got " +
                                shape_str(image.shape()));
  }
  const int pools = cfg.pool_stages();
  Tensor<T> x = image;
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
    const auto& W = params.at("backbone.stage" + std::to_string(i) + ".w");
    const auto& b = params.at("backbone.stage" + std::to_string(i) + ".b");
    x = relu(tape, conv3x3_same(tape, x, W, b));
    if (static_cast<int>(i) < pools) x = max_pool2x2(tape, x);
  }
  return FeatureCube<T>{x, cfg.stride, static_cast<double>(image.shape()[1]),
                        static_cast<double>(image.shape()[0])};
}

}  // namespace accnn
