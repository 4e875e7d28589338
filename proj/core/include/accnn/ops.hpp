#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "accnn/tensor.hpp"

namespace accnn {

namespace detail {

template <typename T>
bool needs_grad(const Tape<T>& tape, std::initializer_list<const Tensor<T>*> inputs) {
  if (!tape.recording()) return false;
  for (const Tensor<T>* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Affine map and elementwise activations
// ---------------------------------------------------------------------------

/// y_i = sum_j W(i,j) x_j + b_i, W of shape [m x n].
template <typename T>
Tensor<T> affine(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b) {
  if (x.rank() != 1 || W.rank() != 2 || b.rank() != 1 || W.shape()[1] != x.shape()[0] ||
      W.shape()[0] != b.shape()[0]) {
    throw std::invalid_argument("affine: W " + shape_str(W.shape()) + " incompatible with x " +
                                shape_str(x.shape()) + " and b " + shape_str(b.shape()));
  }
  const std::size_t m = W.shape()[0], n = W.shape()[1];
  Tensor<T> y({m}, detail::needs_grad(tape, {&x, &W, &b}));
  const T* xv = x.values().data();
  const T* wv = W.values().data();
  const T* bv = b.values().data();
  T* yv = y.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    T acc = bv[i];
    const T* row = wv + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * xv[j];
    yv[i] = acc;
  }
  if (y.requires_grad()) {
    tape.record([x = x, W = W, b = b, y = y]() mutable {
      const std::size_t m = W.shape()[0], n = W.shape()[1];
      auto gy = y.grad();
      if (x.requires_grad()) {
        auto gx = x.grad();
        const T* wv = W.values().data();
        for (std::size_t i = 0; i < m; ++i) {
          const T g = gy[i];
          const T* row = wv + i * n;
          for (std::size_t j = 0; j < n; ++j) gx[j] += row[j] * g;
        }
      }
      if (W.requires_grad()) {
        auto gw = W.grad();
        const T* xv = x.values().data();
        for (std::size_t i = 0; i < m; ++i) {
          const T g = gy[i];
          T* row = gw.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) row[j] += g * xv[j];
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < m; ++i) gb[i] += gy[i];
      }
    });
  }
  return y;
}

enum class Unary { sigmoid, tanh, relu };
enum class Binary { mul, add };

template <typename T>
Tensor<T> elementwise(Tape<T>& tape, const Tensor<T>& x, Unary kind) {
  Tensor<T> y(x.shape(), detail::needs_grad(tape, {&x}));
  const T* xv = x.values().data();
  T* yv = y.values().data();
  const std::size_t n = x.numel();
  switch (kind) {
    case Unary::sigmoid:
      for (std::size_t i = 0; i < n; ++i) yv[i] = detail::stable_sigmoid(xv[i]);
      break;
    case Unary::tanh:
      for (std::size_t i = 0; i < n; ++i) yv[i] = std::tanh(xv[i]);
      break;
    case Unary::relu:
      for (std::size_t i = 0; i < n; ++i) yv[i] = xv[i] > T(0) ? xv[i] : T(0);
      break;
  }
  if (y.requires_grad()) {
    tape.record([x = x, y = y, kind = kind]() mutable {
      auto gx = x.grad();
      auto gy = y.grad();
      const T* xv = x.values().data();
      const T* yv = y.values().data();
      const std::size_t n = x.numel();
      switch (kind) {
        case Unary::sigmoid:
          for (std::size_t i = 0; i < n; ++i) gx[i] += gy[i] * yv[i] * (T(1) - yv[i]);
          break;
        case Unary::tanh:
          for (std::size_t i = 0; i < n; ++i) gx[i] += gy[i] * (T(1) - yv[i] * yv[i]);
          break;
        case Unary::relu:
          for (std::size_t i = 0; i < n; ++i) gx[i] += xv[i] > T(0) ? gy[i] : T(0);
          break;
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> elementwise(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b, Binary kind) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("elementwise: operand shapes differ, " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  Tensor<T> y(a.shape(), detail::needs_grad(tape, {&a, &b}));
  const T* av = a.values().data();
  const T* bv = b.values().data();
  T* yv = y.values().data();
  const std::size_t n = a.numel();
  if (kind == Binary::mul) {
    for (std::size_t i = 0; i < n; ++i) yv[i] = av[i] * bv[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) yv[i] = av[i] + bv[i];
  }
  if (y.requires_grad()) {
    tape.record([a = a, b = b, y = y, kind = kind]() mutable {
      auto gy = y.grad();
      const std::size_t n = y.numel();
      if (kind == Binary::mul) {
        if (a.requires_grad()) {
          auto ga = a.grad();
          const T* bv = b.values().data();
          for (std::size_t i = 0; i < n; ++i) ga[i] += gy[i] * bv[i];
        }
        if (b.requires_grad()) {
          auto gb = b.grad();
          const T* av = a.values().data();
          for (std::size_t i = 0; i < n; ++i) gb[i] += gy[i] * av[i];
        }
      } else {
        if (a.requires_grad()) {
          auto ga = a.grad();
          for (std::size_t i = 0; i < n; ++i) ga[i] += gy[i];
        }
        if (b.requires_grad()) {
          auto gb = b.grad();
          for (std::size_t i = 0; i < n; ++i) gb[i] += gy[i];
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x) {
  return elementwise(tape, x, Unary::sigmoid);
}
template <typename T>
Tensor<T> tanh(Tape<T>& tape, const Tensor<T>& x) {
  return elementwise(tape, x, Unary::tanh);
}
template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) {
  return elementwise(tape, x, Unary::relu);
}
template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(tape, a, b, Binary::mul);
}
template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  return elementwise(tape, a, b, Binary::add);
}

template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("sub: operand shapes differ, " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  Tensor<T> y(a.shape(), detail::needs_grad(tape, {&a, &b}));
  for (std::size_t i = 0; i < a.numel(); ++i) y[i] = a[i] - b[i];
  if (y.requires_grad()) {
    tape.record([a = a, b = b, y = y]() mutable {
      auto gy = y.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < y.numel(); ++i) ga[i] += gy[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < y.numel(); ++i) gb[i] -= gy[i];
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Softmax and reductions
// ---------------------------------------------------------------------------

/// Max-shifted softmax over a rank-1 tensor.
template <typename T>
Tensor<T> softmax(Tape<T>& tape, const Tensor<T>& v) {
  if (v.rank() != 1 || v.numel() == 0) {
    throw std::invalid_argument("softmax: expected nonempty rank-1 input, got " +
                                shape_str(v.shape()));
  }
  const std::size_t n = v.numel();
  Tensor<T> y({n}, detail::needs_grad(tape, {&v}));
  T mx = v[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, v[i]);
  T sum = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::exp(v[i] - mx);
    sum += y[i];
  }
  for (std::size_t i = 0; i < n; ++i) y[i] /= sum;
  if (y.requires_grad()) {
    tape.record([v = v, y = y]() mutable {
      auto gv = v.grad();
      auto gy = y.grad();
      const std::size_t n = y.numel();
      T dot = T(0);
      for (std::size_t i = 0; i < n; ++i) dot += gy[i] * y[i];
      for (std::size_t i = 0; i < n; ++i) gv[i] += y[i] * (gy[i] - dot);
    });
  }
  return y;
}

template <typename T>
Tensor<T> sum_all(Tape<T>& tape, const Tensor<T>& x) {
  Tensor<T> y({1}, detail::needs_grad(tape, {&x}));
  T acc = T(0);
  for (std::size_t i = 0; i < x.numel(); ++i) acc += x[i];
  y[0] = acc;
  if (y.requires_grad()) {
    tape.record([x = x, y = y]() mutable {
      auto gx = x.grad();
      const T g = y.grad()[0];
      for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += g;
    });
  }
  return y;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T c) {
  Tensor<T> y(x.shape(), detail::needs_grad(tape, {&x}));
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = c * x[i];
  if (y.requires_grad()) {
    tape.record([x = x, y = y, c = c]() mutable {
      auto gx = x.grad();
      auto gy = y.grad();
      for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += c * gy[i];
    });
  }
  return y;
}

/// Sum of same-shape tensors (used to fold per-proposal losses).
template <typename T>
Tensor<T> add_many(Tape<T>& tape, const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("add_many: empty operand list");
  bool rg = false;
  for (const auto& x : xs) {
    if (x.shape() != xs[0].shape()) {
      throw std::invalid_argument("add_many: operand shapes differ, " + shape_str(x.shape()) +
                                  " vs " + shape_str(xs[0].shape()));
    }
    rg = rg || x.requires_grad();
  }
  Tensor<T> y(xs[0].shape(), tape.recording() && rg);
  for (const auto& x : xs) {
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] += x[i];
  }
  if (y.requires_grad()) {
    tape.record([xs = xs, y = y]() mutable {
      auto gy = y.grad();
      for (auto& x : xs) {
        if (!x.requires_grad()) continue;
        auto gx = x.grad();
        for (std::size_t i = 0; i < y.numel(); ++i) gx[i] += gy[i];
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.numel()) {
    throw std::invalid_argument("reshape: " + shape_str(x.shape()) + " to " +
                                shape_str(new_shape) + " changes element count");
  }
  Tensor<T> y(std::move(new_shape), detail::needs_grad(tape, {&x}));
  std::copy(x.values().begin(), x.values().end(), y.values().begin());
  if (y.requires_grad()) {
    tape.record([x = x, y = y]() mutable {
      auto gx = x.grad();
      auto gy = y.grad();
      for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += gy[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> flatten(Tape<T>& tape, const Tensor<T>& x) {
  return reshape(tape, x, Shape{x.numel()});
}

/// Concatenation of rank-1 tensors, in operand order.
template <typename T>
Tensor<T> concat_vec(Tape<T>& tape, const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_vec: empty operand list");
  std::size_t total = 0;
  bool rg = false;
  for (const auto& x : xs) {
    if (x.rank() != 1) {
      throw std::invalid_argument("concat_vec: expected rank-1 operands, got " +
                                  shape_str(x.shape()));
    }
    total += x.numel();
    rg = rg || x.requires_grad();
  }
  Tensor<T> y({total}, tape.recording() && rg);
  std::size_t off = 0;
  for (const auto& x : xs) {
    std::copy(x.values().begin(), x.values().end(), y.values().begin() + off);
    off += x.numel();
  }
  if (y.requires_grad()) {
    tape.record([xs = xs, y = y]() mutable {
      auto gy = y.grad();
      std::size_t off = 0;
      for (auto& x : xs) {
        if (x.requires_grad()) {
          auto gx = x.grad();
          for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += gy[off + i];
        }
        off += x.numel();
      }
    });
  }
  return y;
}

/// Channel-axis concatenation of rank-3 (H, W, C_k) tensors sharing H and W.
template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: empty operand list");
  const std::size_t H = xs[0].shape()[0], W = xs[0].shape()[1];
  std::size_t ctotal = 0;
  bool rg = false;
  for (const auto& x : xs) {
    if (x.rank() != 3 || x.shape()[0] != H || x.shape()[1] != W) {
      throw std::invalid_argument("concat_channels: " + shape_str(x.shape()) +
                                  " does not match leading " + shape_str(xs[0].shape()));
    }
    ctotal += x.shape()[2];
    rg = rg || x.requires_grad();
  }
  Tensor<T> y({H, W, ctotal}, tape.recording() && rg);
  std::size_t coff = 0;
  for (const auto& x : xs) {
    const std::size_t C = x.shape()[2];
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w)
        for (std::size_t c = 0; c < C; ++c) y[y.at3(h, w, coff + c)] = x[x.at3(h, w, c)];
    coff += C;
  }
  if (y.requires_grad()) {
    tape.record([xs = xs, y = y]() mutable {
      const std::size_t H = y.shape()[0], W = y.shape()[1];
      auto gy = y.grad();
      std::size_t coff = 0;
      for (auto& x : xs) {
        const std::size_t C = x.shape()[2];
        if (x.requires_grad()) {
          auto gx = x.grad();
          for (std::size_t h = 0; h < H; ++h)
            for (std::size_t w = 0; w < W; ++w)
              for (std::size_t c = 0; c < C; ++c)
                gx[x.at3(h, w, c)] += gy[y.at3(h, w, coff + c)];
        }
        coff += C;
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> slice_vec(Tape<T>& tape, const Tensor<T>& x, std::size_t offset, std::size_t len) {
  if (x.rank() != 1 || offset + len > x.numel()) {
    throw std::invalid_argument("slice_vec: range [" + std::to_string(offset) + ", " +
                                std::to_string(offset + len) + ") out of " + shape_str(x.shape()));
  }
  Tensor<T> y({len}, detail::needs_grad(tape, {&x}));
  for (std::size_t i = 0; i < len; ++i) y[i] = x[offset + i];
  if (y.requires_grad()) {
    tape.record([x = x, y = y, offset = offset, len = len]() mutable {
      auto gx = x.grad();
      auto gy = y.grad();
      for (std::size_t i = 0; i < len; ++i) gx[offset + i] += gy[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

/// Per-location affine map across channels: cube (H, W, C_in) -> (H, W, C_out)
/// with W of shape [C_out x C_in].
template <typename T>
Tensor<T> conv1x1(Tape<T>& tape, const Tensor<T>& cube, const Tensor<T>& W, const Tensor<T>& b) {
  if (cube.rank() != 3 || W.rank() != 2 || W.shape()[1] != cube.shape()[2] ||
      b.shape() != Shape{W.shape()[0]}) {
    throw std::invalid_argument("conv1x1: weights " + shape_str(W.shape()) +
                                " incompatible with cube " + shape_str(cube.shape()));
  }
  const std::size_t H = cube.shape()[0], Wd = cube.shape()[1];
  const std::size_t ci = W.shape()[1], co = W.shape()[0];
  Tensor<T> y({H, Wd, co}, detail::needs_grad(tape, {&cube, &W, &b}));
  const T* xv = cube.values().data();
  const T* wv = W.values().data();
  const T* bv = b.values().data();
  T* yv = y.values().data();
  for (std::size_t p = 0; p < H * Wd; ++p) {
    const T* px = xv + p * ci;
    T* py = yv + p * co;
    for (std::size_t o = 0; o < co; ++o) {
      T acc = bv[o];
      const T* row = wv + o * ci;
      for (std::size_t c = 0; c < ci; ++c) acc += row[c] * px[c];
      py[o] = acc;
    }
  }
  if (y.requires_grad()) {
    tape.record([cube = cube, W = W, b = b, y = y]() mutable {
      const std::size_t P = cube.shape()[0] * cube.shape()[1];
      const std::size_t ci = W.shape()[1], co = W.shape()[0];
      auto gy = y.grad();
      const T* wv = W.values().data();
      const T* xv = cube.values().data();
      for (std::size_t p = 0; p < P; ++p) {
        const T* gyp = gy.data() + p * co;
        if (cube.requires_grad()) {
          T* gx = cube.grad().data() + p * ci;
          for (std::size_t o = 0; o < co; ++o) {
            const T g = gyp[o];
            const T* row = wv + o * ci;
            for (std::size_t c = 0; c < ci; ++c) gx[c] += row[c] * g;
          }
        }
        if (W.requires_grad()) {
          T* gw = W.grad().data();
          const T* px = xv + p * ci;
          for (std::size_t o = 0; o < co; ++o) {
            const T g = gyp[o];
            T* row = gw + o * ci;
            for (std::size_t c = 0; c < ci; ++c) row[c] += g * px[c];
          }
        }
        if (b.requires_grad()) {
          T* gb = b.grad().data();
          for (std::size_t o = 0; o < co; ++o) gb[o] += gyp[o];
        }
      }
    });
  }
  return y;
}

/// 3x3 same-padding convolution on an (H, W, C_in) tensor. Weights are stored
/// as [C_out, 3, 3, C_in] so the innermost accumulation runs over contiguous
/// channel slabs.
template <typename T>
Tensor<T> conv3x3_same(Tape<T>& tape, const Tensor<T>& in, const Tensor<T>& W,
                       const Tensor<T>& b) {
  if (in.rank() != 3 || W.rank() != 4 || W.shape()[1] != 3 || W.shape()[2] != 3 ||
      W.shape()[3] != in.shape()[2] || b.shape() != Shape{W.shape()[0]}) {
    throw std::invalid_argument("conv3x3_same: weights " + shape_str(W.shape()) +
                                " incompatible with input " + shape_str(in.shape()));
  }
  const std::size_t H = in.shape()[0], Wd = in.shape()[1];
  const std::size_t ci = in.shape()[2], co = W.shape()[0];
  Tensor<T> y({H, Wd, co}, detail::needs_grad(tape, {&in, &W, &b}));
  const T* xv = in.values().data();
  const T* wv = W.values().data();
  const T* bv = b.values().data();
  T* yv = y.values().data();
  for (std::size_t oy = 0; oy < H; ++oy) {
    for (std::size_t ox = 0; ox < Wd; ++ox) {
      T* py = yv + (oy * Wd + ox) * co;
      for (std::size_t o = 0; o < co; ++o) py[o] = bv[o];
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = static_cast<int>(oy) + ky - 1;
        if (iy < 0 || iy >= static_cast<int>(H)) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = static_cast<int>(ox) + kx - 1;
          if (ix < 0 || ix >= static_cast<int>(Wd)) continue;
          const T* px = xv + (static_cast<std::size_t>(iy) * Wd + ix) * ci;
          for (std::size_t o = 0; o < co; ++o) {
            const T* row = wv + ((o * 3 + ky) * 3 + kx) * ci;
            T acc = T(0);
            for (std::size_t c = 0; c < ci; ++c) acc += row[c] * px[c];
            py[o] += acc;
          }
        }
      }
    }
  }
  if (y.requires_grad()) {
    tape.record([in = in, W = W, b = b, y = y]() mutable {
      const std::size_t H = in.shape()[0], Wd = in.shape()[1];
      const std::size_t ci = in.shape()[2], co = W.shape()[0];
      auto gy = y.grad();
      const T* xv = in.values().data();
      const T* wv = W.values().data();
      for (std::size_t oy = 0; oy < H; ++oy) {
        for (std::size_t ox = 0; ox < Wd; ++ox) {
          const T* gyp = gy.data() + (oy * Wd + ox) * co;
          if (b.requires_grad()) {
            T* gb = b.grad().data();
            for (std::size_t o = 0; o < co; ++o) gb[o] += gyp[o];
          }
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = static_cast<int>(oy) + ky - 1;
            if (iy < 0 || iy >= static_cast<int>(H)) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = static_cast<int>(ox) + kx - 1;
              if (ix < 0 || ix >= static_cast<int>(Wd)) continue;
              const std::size_t pin = (static_cast<std::size_t>(iy) * Wd + ix) * ci;
              for (std::size_t o = 0; o < co; ++o) {
                const T g = gyp[o];
                const std::size_t wbase = ((o * 3 + ky) * 3 + kx) * ci;
                if (in.requires_grad()) {
                  T* gx = in.grad().data() + pin;
                  const T* row = wv + wbase;
                  for (std::size_t c = 0; c < ci; ++c) gx[c] += row[c] * g;
                }
                if (W.requires_grad()) {
                  T* gw = W.grad().data() + wbase;
                  const T* px = xv + pin;
                  for (std::size_t c = 0; c < ci; ++c) gw[c] += g * px[c];
                }
              }
            }
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Max pooling
// ---------------------------------------------------------------------------

/// 2x2 max pool with ceil-mode edges, so H' = ceil(H / 2).
template <typename T>
Tensor<T> max_pool2x2(Tape<T>& tape, const Tensor<T>& in) {
  if (in.rank() != 3) {
    throw std::invalid_argument("max_pool2x2: expected rank-3 input, got " +
                                shape_str(in.shape()));
  }
  const std::size_t H = in.shape()[0], W = in.shape()[1], C = in.shape()[2];
  const std::size_t Ho = (H + 1) / 2, Wo = (W + 1) / 2;
  Tensor<T> y({Ho, Wo, C}, detail::needs_grad(tape, {&in}));
  std::vector<std::size_t> argmax(y.numel());
  for (std::size_t oy = 0; oy < Ho; ++oy) {
    for (std::size_t ox = 0; ox < Wo; ++ox) {
      const std::size_t y1 = std::min(2 * oy + 2, H), x1 = std::min(2 * ox + 2, W);
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t best = in.at3(2 * oy, 2 * ox, c);
        T bv = in[best];
        for (std::size_t iy = 2 * oy; iy < y1; ++iy) {
          for (std::size_t ix = 2 * ox; ix < x1; ++ix) {
            const std::size_t idx = in.at3(iy, ix, c);
            if (in[idx] > bv) {
              bv = in[idx];
              best = idx;
            }
          }
        }
        const std::size_t oidx = y.at3(oy, ox, c);
        y[oidx] = bv;
        argmax[oidx] = best;
      }
    }
  }
  if (y.requires_grad()) {
    tape.record([in = in, y = y, argmax = std::move(argmax)]() mutable {
      auto gx = in.grad();
      auto gy = y.grad();
      for (std::size_t i = 0; i < y.numel(); ++i) gx[argmax[i]] += gy[i];
    });
  }
  return y;
}

/// Max pool an arbitrary cell region [y0, y1) x [x0, x1) of a rank-3 tensor
/// into an out_h x out_w grid. Bin boundaries are proportional floor/ceil
/// splits, which keeps every bin nonempty for any region of extent >= 1.
/// Gradients route to argmax cells only.
template <typename T>
Tensor<T> max_pool_region(Tape<T>& tape, const Tensor<T>& in, std::size_t y0, std::size_t y1,
                          std::size_t x0, std::size_t x1, std::size_t out_h, std::size_t out_w) {
  if (in.rank() != 3 || y1 <= y0 || x1 <= x0 || y1 > in.shape()[0] || x1 > in.shape()[1] ||
      out_h == 0 || out_w == 0) {
    throw std::invalid_argument("max_pool_region: bad region or output extents for input " +
                                shape_str(in.shape()));
  }
  const std::size_t C = in.shape()[2];
  const std::size_t rh = y1 - y0, rw = x1 - x0;
  Tensor<T> y({out_h, out_w, C}, detail::needs_grad(tape, {&in}));
  std::vector<std::size_t> argmax(y.numel());
  for (std::size_t py = 0; py < out_h; ++py) {
    const std::size_t hs = y0 + (py * rh) / out_h;
    const std::size_t he = y0 + ((py + 1) * rh + out_h - 1) / out_h;
    for (std::size_t px = 0; px < out_w; ++px) {
      const std::size_t ws = x0 + (px * rw) / out_w;
      const std::size_t we = x0 + ((px + 1) * rw + out_w - 1) / out_w;
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t best = in.at3(hs, ws, c);
        T bv = in[best];
        for (std::size_t iy = hs; iy < he; ++iy) {
          for (std::size_t ix = ws; ix < we; ++ix) {
            const std::size_t idx = in.at3(iy, ix, c);
            if (in[idx] > bv) {
              bv = in[idx];
              best = idx;
            }
          }
        }
        const std::size_t oidx = y.at3(py, px, c);
        y[oidx] = bv;
        argmax[oidx] = best;
      }
    }
  }
  if (y.requires_grad()) {
    tape.record([in = in, y = y, argmax = std::move(argmax)]() mutable {
      auto gx = in.grad();
      auto gy = y.grad();
      for (std::size_t i = 0; i < y.numel(); ++i) gx[argmax[i]] += gy[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Loss primitives
// ---------------------------------------------------------------------------

/// Cross-entropy of softmax(scores) against class label g, computed from raw
/// scores via the max-shifted log-sum-exp.
template <typename T>
Tensor<T> cross_entropy_logits(Tape<T>& tape, const Tensor<T>& scores, std::size_t g) {
  if (scores.rank() != 1 || g >= scores.numel()) {
    throw std::invalid_argument("cross_entropy_logits: label " + std::to_string(g) +
                                " out of range for scores " + shape_str(scores.shape()));
  }
  const std::size_t n = scores.numel();
  T mx = scores[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, scores[i]);
  T sum = T(0);
  for (std::size_t i = 0; i < n; ++i) sum += std::exp(scores[i] - mx);
  const T lse = mx + std::log(sum);
  Tensor<T> y({1}, detail::needs_grad(tape, {&scores}));
  y[0] = lse - scores[g];
  if (y.requires_grad()) {
    tape.record([scores = scores, y = y, g = g, lse = lse]() mutable {
      auto gs = scores.grad();
      const T gy = y.grad()[0];
      for (std::size_t i = 0; i < scores.numel(); ++i) {
        T p = std::exp(scores[i] - lse);
        if (i == g) p -= T(1);
        gs[i] += gy * p;
      }
    });
  }
  return y;
}

inline double smooth_l1(double x) { return std::abs(x) < 1.0 ? 0.5 * x * x : std::abs(x) - 0.5; }

/// Sum of smooth-L1 penalties over the components of a rank-1 tensor.
template <typename T>
Tensor<T> smooth_l1_sum(Tape<T>& tape, const Tensor<T>& d) {
  if (d.rank() != 1) {
    throw std::invalid_argument("smooth_l1_sum: expected rank-1 input, got " +
                                shape_str(d.shape()));
  }
  Tensor<T> y({1}, detail::needs_grad(tape, {&d}));
  T acc = T(0);
  for (std::size_t i = 0; i < d.numel(); ++i) {
    const T x = d[i];
    acc += std::abs(x) < T(1) ? T(0.5) * x * x : std::abs(x) - T(0.5);
  }
  y[0] = acc;
  if (y.requires_grad()) {
    tape.record([d = d, y = y]() mutable {
      auto gd = d.grad();
      const T g = y.grad()[0];
      for (std::size_t i = 0; i < d.numel(); ++i) {
        const T x = d[i];
        const T slope = std::abs(x) < T(1) ? x : (x > T(0) ? T(1) : T(-1));
        gd[i] += g * slope;
      }
    });
  }
  return y;
}

}  // namespace accnn
