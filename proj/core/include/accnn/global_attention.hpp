#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "accnn/backbone.hpp"
#include "accnn/ops.hpp"
#include "accnn/params.hpp"

namespace accnn {

enum class GlobalMode { attention, average };

/// Attention-based global context branch: pool the cube to K x K x D, run a
/// stacked LSTM with a location softmax over the K^2 grid for T steps, and
/// feed the final attended feature through two FC+ReLU layers.
struct GlobalConfig {
  int k = 8;
  int t_steps = 3;
  int hidden = 0;  // 0 uses the cube depth
  int layers = 3;
  std::vector<int> fc_dims{256, 256};
  GlobalMode mode = GlobalMode::attention;

  void validate() const {
    if (k < 1 || t_steps < 1 || layers < 1) {
      throw std::invalid_argument("GlobalConfig: k, t_steps and layers must be >= 1");
    }
    if (fc_dims.size() != 2 || fc_dims[0] < 1 || fc_dims[1] < 1) {
      throw std::invalid_argument("GlobalConfig: fc_dims must be two positive ints");
    }
  }

  int hidden_dim(int depth) const { return hidden > 0 ? hidden : depth; }
};

/// Per-layer LSTM state plus the current attention map over K^2 locations.
template <typename T>
struct AttentionState {
  std::vector<Tensor<T>> h;
  std::vector<Tensor<T>> c;
  Tensor<T> map;
};

/// Max-pools the cube's spatial grid into K x K near-equal bins per channel.
template <typename T>
Tensor<T> adaptive_pool_cube(Tape<T>& tape, const Tensor<T>& cube, int K) {
  if (cube.rank() != 3) {
    throw std::invalid_argument("adaptive_pool_cube: expected rank-3 cube, got " +
                                shape_str(cube.shape()));
  }
  const std::size_t k = static_cast<std::size_t>(K);
  const std::size_t kh = std::min(k, cube.shape()[0]);
  const std::size_t kw = std::min(k, cube.shape()[1]);
  if (kh != k || kw != k) {
    throw std::invalid_argument("adaptive_pool_cube: K exceeds cube extents " +
                                shape_str(cube.shape()));
  }
  return max_pool_region(tape, cube, 0, cube.shape()[0], 0, cube.shape()[1], k, k);
}

template <typename T>
Tensor<T> adaptive_pool_cube(Tape<T>& tape, const FeatureCube<T>& cube, int K) {
  return adaptive_pool_cube(tape, cube.data, K);
}

/// Constant uniform distribution over n cells (not a learnable tensor).
template <typename T>
Tensor<T> uniform_map(std::size_t n) {
  return Tensor<T>::full({n}, T(1) / static_cast<T>(n));
}

/// Expectation over feature slices: x = sum_i l_i X_i with X of shape
/// [K^2 x D]. The map must lie on the probability simplex.
template <typename T>
Tensor<T> attend(Tape<T>& tape, const Tensor<T>& X, const Tensor<T>& l) {
  if (X.rank() != 2 || l.rank() != 1 || X.shape()[0] != l.shape()[0]) {
    throw std::invalid_argument("attend: slices " + shape_str(X.shape()) +
                                " incompatible with map " + shape_str(l.shape()));
  }
  T sum = T(0);
  for (std::size_t i = 0; i < l.numel(); ++i) {
    if (l[i] < T(0)) throw std::invalid_argument("attend: map has a negative component");
    sum += l[i];
  }
  if (std::abs(static_cast<double>(sum) - 1.0) > 1e-4) {
    throw std::invalid_argument("attend: map is not normalized, sum = " +
                                std::to_string(static_cast<double>(sum)));
  }
  const std::size_t n = X.shape()[0], D = X.shape()[1];
  Tensor<T> y({D}, detail::needs_grad(tape, {&X, &l}));
  for (std::size_t i = 0; i < n; ++i) {
    const T w = l[i];
    const T* row = X.values().data() + i * D;
    for (std::size_t d = 0; d < D; ++d) y[d] += w * row[d];
  }
  if (y.requires_grad()) {
    tape.record([X = X, l = l, y = y]() mutable {
      const std::size_t n = X.shape()[0], D = X.shape()[1];
      auto gy = y.grad();
      if (X.requires_grad()) {
        auto gx = X.grad();
        for (std::size_t i = 0; i < n; ++i) {
          const T w = l[i];
          T* row = gx.data() + i * D;
          for (std::size_t d = 0; d < D; ++d) row[d] += w * gy[d];
        }
      }
      if (l.requires_grad()) {
        auto gl = l.grad();
        const T* xv = X.values().data();
        for (std::size_t i = 0; i < n; ++i) {
          T dot = T(0);
          const T* row = xv + i * D;
          for (std::size_t d = 0; d < D; ++d) dot += row[d] * gy[d];
          gl[i] += dot;
        }
      }
    });
  }
  return y;
}

/// Softmax over K^2 location logits W_loc h + b_loc.
template <typename T>
Tensor<T> location_softmax(Tape<T>& tape, const Tensor<T>& h_top, const Tensor<T>& w_loc,
                           const Tensor<T>& b_loc) {
  return softmax(tape, affine(tape, h_top, w_loc, b_loc));
}

template <typename T>
void init_global_params(ParamStore<T>& store, const GlobalConfig& cfg, int depth,
                        std::mt19937_64& rng) {
  cfg.validate();
  const std::size_t D = static_cast<std::size_t>(depth);
  const std::size_t d = static_cast<std::size_t>(cfg.hidden_dim(depth));
  if (cfg.mode == GlobalMode::attention) {
    for (int layer = 0; layer < cfg.layers; ++layer) {
      const std::string p = "global.layer" + std::to_string(layer) + ".";
      const std::size_t in_dim = layer == 0 ? D : d;
      add_gaussian_param(store, p + "lstm.M", {4 * d, d + in_dim}, 0.01, rng);
      add_zero_param(store, p + "lstm.b", {4 * d});
      for (const char* which : {"init_c", "init_h"}) {
        add_gaussian_param(store, p + which + ".w1", {d, D}, 0.01, rng);
        add_zero_param(store, p + which + ".b1", {d});
        add_gaussian_param(store, p + which + ".w2", {d, d}, 0.01, rng);
        add_zero_param(store, p + which + ".b2", {d});
      }
    }
    const std::size_t kk = static_cast<std::size_t>(cfg.k) * static_cast<std::size_t>(cfg.k);
    add_gaussian_param(store, "global.attn.w_loc", {kk, d}, 0.01, rng);
    add_zero_param(store, "global.attn.b_loc", {kk});
  }
  add_gaussian_param(store, "global.fc1.w", {static_cast<std::size_t>(cfg.fc_dims[0]), D}, 0.01,
                     rng);
  add_zero_param(store, "global.fc1.b", {static_cast<std::size_t>(cfg.fc_dims[0])});
  add_gaussian_param(store, "global.fc2.w",
                     {static_cast<std::size_t>(cfg.fc_dims[1]),
                      static_cast<std::size_t>(cfg.fc_dims[0])},
                     0.01, rng);
  add_zero_param(store, "global.fc2.b", {static_cast<std::size_t>(cfg.fc_dims[1])});
}

namespace detail {

/// One-hidden-layer MLP (tanh hidden, linear output) used for state init.
template <typename T>
Tensor<T> init_mlp(Tape<T>& tape, const Tensor<T>& m, const ParamStore<T>& params,
                   const std::string& prefix) {
  Tensor<T> hidden =
      tanh(tape, affine(tape, m, params.at(prefix + ".w1"), params.at(prefix + ".b1")));
  return affine(tape, hidden, params.at(prefix + ".w2"), params.at(prefix + ".b2"));
}

}  // namespace detail

/// Builds (h_0, c_0) per layer from the mean slice, and the first map l_1
/// from the top layer's h_0.
template <typename T>
AttentionState<T> init_state(Tape<T>& tape, const Tensor<T>& X, const GlobalConfig& cfg,
                             const ParamStore<T>& params) {
  cfg.validate();
  Tensor<T> m = attend(tape, X, uniform_map<T>(X.shape()[0]));
  AttentionState<T> state;
  for (int layer = 0; layer < cfg.layers; ++layer) {
    const std::string p = "global.layer" + std::to_string(layer) + ".";
    state.c.push_back(detail::init_mlp(tape, m, params, p + "init_c"));
    state.h.push_back(detail::init_mlp(tape, m, params, p + "init_h"));
  }
  state.map = location_softmax(tape, state.h.back(), params.at("global.attn.w_loc"),
                               params.at("global.attn.b_loc"));
  return state;
}

/// One recurrence step through the stacked LSTM. Per layer, the gate block
/// (i, f, o, g) comes from one affine of [h_{t-1}; input]; then
/// c_t = f * c_{t-1} + i * g and h_t = o * tanh(c_t). Layer k > 1 takes the
/// fresh h of layer k-1 as input. The attention map is carried through.
template <typename T>
AttentionState<T> lstm_step(Tape<T>& tape, const Tensor<T>& x_t, const AttentionState<T>& state,
                            const GlobalConfig& cfg, const ParamStore<T>& params) {
  cfg.validate();
  if (static_cast<int>(state.h.size()) != cfg.layers || state.c.size() != state.h.size()) {
    throw std::invalid_argument("lstm_step: state layer count does not match config");
  }
  AttentionState<T> next;
  next.map = state.map;
  Tensor<T> input = x_t;
  for (int layer = 0; layer < cfg.layers; ++layer) {
    const std::string p = "global.layer" + std::to_string(layer) + ".";
    const Tensor<T>& M = params.at(p + "lstm.M");
    const Tensor<T>& b = params.at(p + "lstm.b");
    const std::size_t d = state.h[layer].numel();
    if (M.shape()[1] != d + input.numel()) {
      throw std::invalid_argument("lstm_step: layer " + std::to_string(layer) + " input " +
                                  shape_str(input.shape()) + " incompatible with M " +
                                  shape_str(M.shape()));
    }
    Tensor<T> z = affine(tape, concat_vec(tape, {state.h[layer], input}), M, b);
    Tensor<T> gate_i = sigmoid(tape, slice_vec(tape, z, 0, d));
    Tensor<T> gate_f = sigmoid(tape, slice_vec(tape, z, d, d));
    Tensor<T> gate_o = sigmoid(tape, slice_vec(tape, z, 2 * d, d));
    Tensor<T> gate_g = tanh(tape, slice_vec(tape, z, 3 * d, d));
    Tensor<T> c_new =
        add(tape, mul(tape, gate_f, state.c[layer]), mul(tape, gate_i, gate_g));
    Tensor<T> h_new = mul(tape, gate_o, tanh(tape, c_new));
    next.c.push_back(c_new);
    next.h.push_back(h_new);
    input = h_new;
  }
  return next;
}

template <typename T>
struct GlobalResult {
  Tensor<T> f_global;             // F_G
  std::vector<Tensor<T>> maps;    // l_1 .. l_{T+1} (attention) or {uniform}
};

namespace detail {

template <typename T>
Tensor<T> global_fc(Tape<T>& tape, const Tensor<T>& z, const ParamStore<T>& params) {
  Tensor<T> h1 =
      relu(tape, affine(tape, z, params.at("global.fc1.w"), params.at("global.fc1.b")));
  return relu(tape, affine(tape, h1, params.at("global.fc2.w"), params.at("global.fc2.b")));
}

}  // namespace detail

/// Full global-context pipeline over a pooled K x K x D cube.
template <typename T>
GlobalResult<T> global_feature(Tape<T>& tape, const FeatureCube<T>& cube, const GlobalConfig& cfg,
                               const ParamStore<T>& params) {
  cfg.validate();
  Tensor<T> pooled = adaptive_pool_cube(tape, cube, cfg.k);
  const std::size_t kk = static_cast<std::size_t>(cfg.k) * static_cast<std::size_t>(cfg.k);
  Tensor<T> X = reshape(tape, pooled, {kk, pooled.shape()[2]});

  GlobalResult<T> out;
  if (cfg.mode == GlobalMode::average) {
    Tensor<T> l = uniform_map<T>(kk);
    out.maps.push_back(l);
    out.f_global = detail::global_fc(tape, attend(tape, X, l), params);
    return out;
  }

  AttentionState<T> state = init_state(tape, X, cfg, params);
  out.maps.push_back(state.map);
  for (int t = 0; t < cfg.t_steps; ++t) {
    Tensor<T> x_t = attend(tape, X, state.map);
    state = lstm_step(tape, x_t, state, cfg, params);
    state.map = location_softmax(tape, state.h.back(), params.at("global.attn.w_loc"),
                                 params.at("global.attn.b_loc"));
    out.maps.push_back(state.map);
  }
  out.f_global = detail::global_fc(tape, attend(tape, X, state.map), params);
  return out;
}

/// Ablation entry point: the same FC head fed by the uniform-map expectation.
template <typename T>
Tensor<T> average_pool_global(Tape<T>& tape, const FeatureCube<T>& cube, const GlobalConfig& cfg,
                              const ParamStore<T>& params) {
  GlobalConfig avg = cfg;
  avg.mode = GlobalMode::average;
  return global_feature(tape, cube, avg, params).f_global;
}

}  // namespace accnn
