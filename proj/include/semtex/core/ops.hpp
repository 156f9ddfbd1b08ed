// Copyright 2026 The semtex Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Differentiable free functions on Var. Image batches are NCHW.

#pragma once

#include "semtex/core/var.hpp"

#include <algorithm>
#include <cmath>

namespace semtex {

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

inline void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

/// Splits a shape around `axis` into (outer, mid, inner) extents.
inline std::array<Index, 3> around_axis(const Shape& s, std::size_t axis) {
  require(axis < s.size(), "axis out of range for " + shape_string(s));
  Index outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  return {outer, s[axis], inner};
}

template <typename Scalar>
Tensor<Scalar> im2col(const Scalar* x, Index C, Index H, Index W, Index K, Index stride, Index pad, Index Ho,
                      Index Wo) {
  // Column (c,ky,kx) holds the shifted input plane; rows are output pixels.
  Tensor<Scalar> cols({Ho * Wo, C * K * K});
  Scalar* out = cols.data();
  for (Index c = 0; c < C; ++c) {
    const Scalar* plane = x + c * H * W;
    for (Index ky = 0; ky < K; ++ky) {
      for (Index kx = 0; kx < K; ++kx) {
        Scalar* col = out + ((c * K + ky) * K + kx) * Ho * Wo;
        for (Index oy = 0; oy < Ho; ++oy) {
          const Index iy = oy * stride - pad + ky;
          Scalar* row = col + oy * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(row, row + Wo, Scalar(0));
            continue;
          }
          const Scalar* src = plane + iy * W;
          for (Index ox = 0; ox < Wo; ++ox) {
            const Index ix = ox * stride - pad + kx;
            row[ox] = (ix < 0 || ix >= W) ? Scalar(0) : src[ix];
          }
        }
      }
    }
  }
  return cols;
}

template <typename Scalar>
void col2im_add(const Scalar* cols, Index C, Index H, Index W, Index K, Index stride, Index pad, Index Ho, Index Wo,
                Scalar* x) {
  for (Index c = 0; c < C; ++c) {
    Scalar* plane = x + c * H * W;
    for (Index ky = 0; ky < K; ++ky) {
      for (Index kx = 0; kx < K; ++kx) {
        const Scalar* col = cols + ((c * K + ky) * K + kx) * Ho * Wo;
        for (Index oy = 0; oy < Ho; ++oy) {
          const Index iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          const Scalar* row = col + oy * Wo;
          Scalar* dst = plane + iy * W;
          for (Index ox = 0; ox < Wo; ++ox) {
            const Index ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) dst[ix] += row[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same(a.shape(), b.shape(), "add");
  Tensor<Scalar> out(a.shape(), a.value().array() + b.value().array());
  return make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    if (auto* x = self.input(0)) x->grad_ref().array() += self.grad.array();
    if (auto* y = self.input(1)) y->grad_ref().array() += self.grad.array();
  });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same(a.shape(), b.shape(), "sub");
  Tensor<Scalar> out(a.shape(), a.value().array() - b.value().array());
  return make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    if (auto* x = self.input(0)) x->grad_ref().array() += self.grad.array();
    if (auto* y = self.input(1)) y->grad_ref().array() -= self.grad.array();
  });
}

template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same(a.shape(), b.shape(), "mul");
  Tensor<Scalar> out(a.shape(), a.value().array() * b.value().array());
  return make_result<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    const auto& av = self.inputs[0]->value.array();
    const auto& bv = self.inputs[1]->value.array();
    if (auto* x = self.input(0)) x->grad_ref().array() += self.grad.array() * bv;
    if (auto* y = self.input(1)) y->grad_ref().array() += self.grad.array() * av;
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
  Tensor<Scalar> out(a.shape(), a.value().array() * s);
  return make_result<Scalar>(std::move(out), {a}, [s](Node<Scalar>& self) {
    if (auto* x = self.input(0)) x->grad_ref().array() += self.grad.array() * s;
  });
}

template <typename Scalar>
Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar s) {
  Tensor<Scalar> out(a.shape(), a.value().array() + s);
  return make_result<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    if (auto* x = self.input(0)) x->grad_ref().array() += self.grad.array();
  });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a) {
  return scale(a, Scalar(-1));
}

template <typename Scalar>
Var<Scalar> square(const Var<Scalar>& a) {
  Tensor<Scalar> out(a.shape(), a.value().array().square());
  return make_result<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    if (auto* x = self.input(0)) x->grad_ref().array() += Scalar(2) * self.grad.array() * x->value.array();
  });
}

/// sqrt with a zero subgradient at 0.
template <typename Scalar>
Var<Scalar> sqrt(const Var<Scalar>& a) {
  Tensor<Scalar> out(a.shape(), a.value().array().sqrt());
  return make_result<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    if (auto* x = self.input(0)) {
      const auto& y = self.value.array();
      x->grad_ref().array() += (y > Scalar(0)).select(self.grad.array() / (Scalar(2) * y), Scalar(0));
    }
  });
}

template <typename Scalar>
Var<Scalar> rsqrt(const Var<Scalar>& a) {
  Tensor<Scalar> out(a.shape(), a.value().array().rsqrt());
  return make_result<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    if (auto* x = self.input(0)) {
      const auto& y = self.value.array();
      x->grad_ref().array() += Scalar(-0.5) * self.grad.array() * y * y * y;
    }
  });
}

/// log(1 + exp(x)), evaluated stably.
template <typename Scalar>
Var<Scalar> softplus(const Var<Scalar>& a) {
  const auto& x = a.value().array();
  Tensor<Scalar> out(a.shape(), x.max(Scalar(0)) + (-x.abs()).exp().log1p());
  return make_result<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    if (auto* in = self.input(0)) {
      const auto& v = in->value.array();
      in->grad_ref().array() += self.grad.array() / (Scalar(1) + (-v).exp());
    }
  });
}

template <typename Scalar>
Var<Scalar> leaky_relu(const Var<Scalar>& a, Scalar slope = Scalar(0.2), Scalar gain = Scalar(1)) {
  const auto& x = a.value().array();
  Tensor<Scalar> out(a.shape(), (x > Scalar(0)).select(x * gain, x * (slope * gain)));
  return make_result<Scalar>(std::move(out), {a}, [slope, gain](Node<Scalar>& self) {
    if (auto* in = self.input(0)) {
      const auto& v = in->value.array();
      in->grad_ref().array() += (v > Scalar(0)).select(self.grad.array() * gain, self.grad.array() * (slope * gain));
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  Tensor<Scalar> out({1});
  out[0] = a.value().array().sum();
  return make_result<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    if (auto* x = self.input(0)) x->grad_ref().array() += self.grad[0];
  });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& a) {
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.numel()));
}

/// Sums the last axis: [..., k] -> [...].
template <typename Scalar>
Var<Scalar> sum_last(const Var<Scalar>& a) {
  detail::require(a.value().rank() >= 1, "sum_last: rank 0");
  const Index k = a.shape().back();
  const Index rows = a.numel() / k;
  Shape s(a.shape().begin(), a.shape().end() - 1);
  if (s.empty()) s = {1};
  Tensor<Scalar> out(s);
  // Buffer is [rows, k] row-major == col-major [k, rows].
  out.array() = a.value().matrix(k, rows).colwise().sum().transpose().array();
  return make_result<Scalar>(std::move(out), {a}, [k, rows](Node<Scalar>& self) {
    if (auto* x = self.input(0)) {
      auto g = x->grad_ref().matrix(k, rows);
      const auto go = self.grad.matrix(1, rows);
      g.rowwise() += go.row(0);
    }
  });
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& a, Shape shape) {
  Tensor<Scalar> out = a.value().reshaped(std::move(shape));
  return make_result<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    if (auto* x = self.input(0)) x->grad_ref().array() += self.grad.array();
  });
}

/// Slices [begin, end) along `axis`.
template <typename Scalar>
Var<Scalar> slice(const Var<Scalar>& a, std::size_t axis, Index begin, Index end) {
  const auto [outer, mid, inner] = detail::around_axis(a.shape(), axis);
  detail::require(0 <= begin && begin <= end && end <= mid, "slice: bad range on " + shape_string(a.shape()));
  Shape s = a.shape();
  s[axis] = end - begin;
  Tensor<Scalar> out(s);
  const Index len = (end - begin) * inner;
  for (Index o = 0; o < outer; ++o)
    std::copy_n(a.value().data() + (o * mid + begin) * inner, len, out.data() + o * len);
  return make_result<Scalar>(std::move(out), {a}, [outer, mid, inner, begin, len](Node<Scalar>& self) {
    if (auto* x = self.input(0)) {
      auto& g = x->grad_ref();
      for (Index o = 0; o < outer; ++o) {
        Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(g.data() + (o * mid + begin) * inner, len) +=
            Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(self.grad.data() + o * len, len);
      }
    }
  });
}

/// Concatenates along `axis`; all other extents must agree.
template <typename Scalar>
Var<Scalar> concat(const std::vector<Var<Scalar>>& parts, std::size_t axis) {
  detail::require(!parts.empty(), "concat: no inputs");
  Shape s = parts.front().shape();
  const auto [outer, mid0, inner] = detail::around_axis(s, axis);
  std::vector<Index> mids;
  Index total = 0;
  for (const auto& p : parts) {
    Shape ps = p.shape();
    detail::require(ps.size() == s.size(), "concat: rank mismatch");
    ps[axis] = s[axis];
    detail::require(ps == s, "concat: shape mismatch " + shape_string(p.shape()) + " vs " + shape_string(s));
    mids.push_back(p.dim(axis));
    total += p.dim(axis);
  }
  s[axis] = total;
  Tensor<Scalar> out(s);
  for (Index o = 0; o < outer; ++o) {
    Index offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      std::copy_n(parts[k].value().data() + o * mids[k] * inner, mids[k] * inner,
                  out.data() + (o * total + offset) * inner);
      offset += mids[k];
    }
  }
  return make_result<Scalar>(std::move(out), parts, [outer, inner, total, mids](Node<Scalar>& self) {
    Index offset = 0;
    for (std::size_t k = 0; k < mids.size(); ++k) {
      if (auto* x = self.input(k)) {
        auto& g = x->grad_ref();
        for (Index o = 0; o < outer; ++o) {
          Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(g.data() + o * mids[k] * inner, mids[k] * inner) +=
              Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>(
                  self.grad.data() + (o * total + offset) * inner, mids[k] * inner);
        }
      }
      offset += mids[k];
    }
  });
}

/// Repeats a leading-axis-1 tensor n times along axis 0.
template <typename Scalar>
Var<Scalar> repeat_batch(const Var<Scalar>& a, Index n) {
  detail::require(a.dim(0) == 1, "repeat_batch: leading axis must be 1");
  Shape s = a.shape();
  s[0] = n;
  Tensor<Scalar> out(s);
  const Index m = a.numel();
  for (Index i = 0; i < n; ++i) std::copy_n(a.value().data(), m, out.data() + i * m);
  return make_result<Scalar>(std::move(out), {a}, [n, m](Node<Scalar>& self) {
    if (auto* x = self.input(0)) x->grad_ref().matrix(m, 1) += self.grad.matrix(m, n).rowwise().sum();
  });
}

// ---------------------------------------------------------------------------
// Linear algebra and broadcasting
// ---------------------------------------------------------------------------

/// a [m,k] times b [n,k] transposed -> [m,n].
template <typename Scalar>
Var<Scalar> matmul_nt(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require(a.value().rank() == 2 && b.value().rank() == 2 && a.dim(1) == b.dim(1),
                  "matmul_nt: incompatible " + shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor<Scalar> out({m, n});
  // Row-major [m,k] buffers are col-major [k,m]; out^T = b * a^T.
  out.matrix(n, m).noalias() = b.value().matrix(k, n).transpose() * a.value().matrix(k, m);
  return make_result<Scalar>(std::move(out), {a, b}, [m, k, n](Node<Scalar>& self) {
    const auto gT = self.grad.matrix(n, m);  // out^T
    if (auto* x = self.input(0))              // dA^T [k,m] = b^T [k,n] * gT
      x->grad_ref().matrix(k, m).noalias() += self.inputs[1]->value.matrix(k, n) * gT;
    if (auto* y = self.input(1))  // dB^T [k,n] = a^T [k,m] * gT^T
      y->grad_ref().matrix(k, n).noalias() += self.inputs[0]->value.matrix(k, m) * gT.transpose();
  });
}

/// Adds b [C] to x [N, C, ...].
template <typename Scalar>
Var<Scalar> add_bias(const Var<Scalar>& x, const Var<Scalar>& b) {
  using MatMap = typename Tensor<Scalar>::MatrixMap;
  using CMatMap = typename Tensor<Scalar>::ConstMatrixMap;
  const auto [outer, C, inner] = detail::around_axis(x.shape(), 1);
  detail::require(b.numel() == C, "add_bias: bias size mismatch");
  Tensor<Scalar> out = x.value();
  const CMatMap bv(b.value().data(), 1, C);
  for (Index o = 0; o < outer; ++o) MatMap(out.data() + o * C * inner, inner, C).rowwise() += bv.row(0);
  return make_result<Scalar>(std::move(out), {x, b}, [outer = outer, C = C, inner = inner](Node<Scalar>& self) {
    if (auto* in = self.input(0)) in->grad_ref().array() += self.grad.array();
    if (auto* bias = self.input(1)) {
      MatMap gb(bias->grad_ref().data(), 1, C);
      for (Index o = 0; o < outer; ++o) gb += CMatMap(self.grad.data() + o * C * inner, inner, C).colwise().sum();
    }
  });
}

/// out[n,c,...] = x[n,c,...] * s[n,c].
template <typename Scalar>
Var<Scalar> scale_channels(const Var<Scalar>& x, const Var<Scalar>& s) {
  const auto [N, C, inner] = detail::around_axis(x.shape(), 1);
  detail::require(s.numel() == N * C, "scale_channels: scale must be [N,C]");
  Tensor<Scalar> out = x.value();
  auto om = out.matrix(inner, N * C);
  om = om * s.value().matrix(N * C, 1).asDiagonal();
  return make_result<Scalar>(std::move(out), {x, s}, [N = N, C = C, inner = inner](Node<Scalar>& self) {
    const auto g = self.grad.matrix(inner, N * C);
    if (auto* in = self.input(0))
      in->grad_ref().matrix(inner, N * C) += g * self.inputs[1]->value.matrix(N * C, 1).asDiagonal();
    if (auto* sc = self.input(1))
      sc->grad_ref().matrix(N * C, 1) +=
          (g.array() * self.inputs[0]->value.matrix(inner, N * C).array()).colwise().sum().transpose().matrix();
  });
}

/// y = scale * x / sqrt(sum_axis1(x^2) + eps) for x viewed as [outer, mid, inner].
/// With eps == 0 a zero vector maps to zero.
template <typename Scalar>
Var<Scalar> normalize_axis1(const Var<Scalar>& x, Scalar scale_factor = Scalar(1), Scalar eps = Scalar(0)) {
  const auto [outer, mid, inner] = detail::around_axis(x.shape(), 1);
  Tensor<Scalar> out(x.shape());
  Tensor<Scalar> inv({outer, inner});
  for (Index o = 0; o < outer; ++o) {
    auto xm = x.value().matrix(x.numel(), 1).block(o * mid * inner, 0, mid * inner, 1).reshaped(inner, mid);
    auto ym = out.matrix(out.numel(), 1).block(o * mid * inner, 0, mid * inner, 1).reshaped(inner, mid);
    for (Index i = 0; i < inner; ++i) {
      const Scalar norm = std::sqrt(xm.row(i).squaredNorm() + eps);
      const Scalar r = norm > Scalar(0) ? scale_factor / norm : Scalar(0);
      inv[o * inner + i] = r;
      ym.row(i) = xm.row(i) * r;
    }
  }
  return make_result<Scalar>(std::move(out), {x}, [outer = outer, mid = mid, inner = inner, inv, scale_factor](Node<Scalar>& self) {
    auto* in = self.input(0);
    if (!in) return;
    // dy/dx = r (I - y y^T / scale^2)
    const Index block = mid * inner;
    for (Index o = 0; o < outer; ++o) {
      auto g = self.grad.matrix(self.grad.numel(), 1).block(o * block, 0, block, 1).reshaped(inner, mid);
      auto y = self.value.matrix(self.value.numel(), 1).block(o * block, 0, block, 1).reshaped(inner, mid);
      auto dx = in->grad_ref().matrix(in->grad.numel(), 1).block(o * block, 0, block, 1).reshaped(inner, mid);
      for (Index i = 0; i < inner; ++i) {
        const Scalar r = inv[o * inner + i];
        if (r == Scalar(0)) continue;
        const Scalar gy = g.row(i).dot(y.row(i)) / (scale_factor * scale_factor);
        dx.row(i) += r * (g.row(i) - gy * y.row(i));
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Image ops
// ---------------------------------------------------------------------------

/// 2-d cross-correlation: x [N,C,H,W], w [O,C,K,K] -> [N,O,Ho,Wo].
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& w, Index stride = 1, Index pad = 0) {
  detail::require(x.value().rank() == 4 && w.value().rank() == 4, "conv2d: expects rank-4 input and weight");
  const Index N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Index O = w.dim(0), K = w.dim(2);
  detail::require(w.dim(1) == C && w.dim(3) == K,
                  "conv2d: weight " + shape_string(w.shape()) + " incompatible with input " + shape_string(x.shape()));
  const Index Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
  detail::require(Ho > 0 && Wo > 0, "conv2d: empty output");
  const Index CKK = C * K * K, P = Ho * Wo;
  const bool pointwise = K == 1 && stride == 1 && pad == 0;
  Tensor<Scalar> out({N, O, Ho, Wo});
  const auto wt = w.value().matrix(CKK, O);
  for (Index n = 0; n < N; ++n) {
    const Scalar* xn = x.value().data() + n * C * H * W;
    typename Tensor<Scalar>::MatrixMap on(out.data() + n * O * P, P, O);
    if (pointwise) {
      on.noalias() = typename Tensor<Scalar>::ConstMatrixMap(xn, P, C) * wt;
    } else {
      const auto cols = detail::im2col(xn, C, H, W, K, stride, pad, Ho, Wo);
      on.noalias() = cols.matrix(P, CKK) * wt;
    }
  }
  return make_result<Scalar>(std::move(out), {x, w}, [=](Node<Scalar>& self) {
    auto* xin = self.input(0);
    auto* win = self.input(1);
    const auto& xv = self.inputs[0]->value;
    const auto wtv = self.inputs[1]->value.matrix(CKK, O);
    for (Index n = 0; n < N; ++n) {
      const Scalar* xn = xv.data() + n * C * H * W;
      typename Tensor<Scalar>::ConstMatrixMap gn(self.grad.data() + n * O * P, P, O);
      if (pointwise) {
        typename Tensor<Scalar>::ConstMatrixMap xm(xn, P, C);
        if (win) win->grad_ref().matrix(CKK, O).noalias() += xm.transpose() * gn;
        if (xin) typename Tensor<Scalar>::MatrixMap(xin->grad_ref().data() + n * C * H * W, P, C).noalias() +=
            gn * wtv.transpose();
        continue;
      }
      if (win) {
        const auto cols = detail::im2col(xn, C, H, W, K, stride, pad, Ho, Wo);
        win->grad_ref().matrix(CKK, O).noalias() += cols.matrix(P, CKK).transpose() * gn;
      }
      if (xin) {
        Tensor<Scalar> dcols({P, CKK});
        dcols.matrix(P, CKK).noalias() = gn * wtv.transpose();
        detail::col2im_add(dcols.data(), C, H, W, K, stride, pad, Ho, Wo, xin->grad_ref().data() + n * C * H * W);
      }
    }
  });
}

/// Nearest-neighbour 2x upsampling of [N,C,H,W].
template <typename Scalar>
Var<Scalar> upsample2x(const Var<Scalar>& x) {
  const Index NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  Shape s = x.shape();
  s[2] *= 2;
  s[3] *= 2;
  Tensor<Scalar> out(s);
  for (Index p = 0; p < NC; ++p) {
    const Scalar* src = x.value().data() + p * H * W;
    Scalar* dst = out.data() + p * 4 * H * W;
    for (Index y = 0; y < 2 * H; ++y)
      for (Index xx = 0; xx < 2 * W; ++xx) dst[y * 2 * W + xx] = src[(y / 2) * W + xx / 2];
  }
  return make_result<Scalar>(std::move(out), {x}, [NC, H, W](Node<Scalar>& self) {
    auto* in = self.input(0);
    if (!in) return;
    for (Index p = 0; p < NC; ++p) {
      const Scalar* g = self.grad.data() + p * 4 * H * W;
      Scalar* dst = in->grad_ref().data() + p * H * W;
      for (Index y = 0; y < 2 * H; ++y)
        for (Index xx = 0; xx < 2 * W; ++xx) dst[(y / 2) * W + xx / 2] += g[y * 2 * W + xx];
    }
  });
}

/// Box-filter downsampling by an integer factor (area averaging).
template <typename Scalar>
Var<Scalar> avg_pool(const Var<Scalar>& x, Index factor) {
  const Index NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  detail::require(factor >= 1 && H % factor == 0 && W % factor == 0, "avg_pool: size not divisible by factor");
  if (factor == 1) return x;
  const Index Ho = H / factor, Wo = W / factor;
  const Scalar norm = Scalar(1) / static_cast<Scalar>(factor * factor);
  Shape s = x.shape();
  s[2] = Ho;
  s[3] = Wo;
  Tensor<Scalar> out(s);
  for (Index p = 0; p < NC; ++p) {
    const Scalar* src = x.value().data() + p * H * W;
    Scalar* dst = out.data() + p * Ho * Wo;
    for (Index y = 0; y < H; ++y)
      for (Index xx = 0; xx < W; ++xx) dst[(y / factor) * Wo + xx / factor] += src[y * W + xx];
    for (Index i = 0; i < Ho * Wo; ++i) dst[i] *= norm;
  }
  return make_result<Scalar>(std::move(out), {x}, [NC, H, W, Ho, Wo, factor, norm](Node<Scalar>& self) {
    auto* in = self.input(0);
    if (!in) return;
    for (Index p = 0; p < NC; ++p) {
      const Scalar* g = self.grad.data() + p * Ho * Wo;
      Scalar* dst = in->grad_ref().data() + p * H * W;
      for (Index y = 0; y < H; ++y)
        for (Index xx = 0; xx < W; ++xx) dst[y * W + xx] += norm * g[(y / factor) * Wo + xx / factor];
    }
  });
}

/// Resizes a square [N,C,H,H] map to `size` by area averaging or nearest upsampling (powers of two).
template <typename Scalar>
Var<Scalar> resize_pow2(const Var<Scalar>& x, Index size) {
  Var<Scalar> y = x;
  while (y.dim(2) < size) y = upsample2x(y);
  if (y.dim(2) > size) y = avg_pool(y, y.dim(2) / size);
  return y;
}

/// x + strength * noise, noise [N or 1, 1, H, W] broadcast over channels.
template <typename Scalar>
Var<Scalar> add_noise(const Var<Scalar>& x, const Tensor<Scalar>& noise, const Var<Scalar>& strength) {
  using MatMap = typename Tensor<Scalar>::MatrixMap;
  using CMatMap = typename Tensor<Scalar>::ConstMatrixMap;
  const Index N = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  detail::require(noise.numel() == P || noise.numel() == N * P, "add_noise: noise shape mismatch");
  const bool shared = noise.numel() == P;
  const Scalar s = strength.value()[0];
  Tensor<Scalar> out = x.value();
  for (Index n = 0; n < N; ++n) {
    const CMatMap nz(noise.data() + (shared ? 0 : n * P), P, 1);
    MatMap(out.data() + n * C * P, P, C).colwise() += s * nz.col(0);
  }
  return make_result<Scalar>(std::move(out), {x, strength}, [N, C, P, shared, noise](Node<Scalar>& self) {
    if (auto* in = self.input(0)) in->grad_ref().array() += self.grad.array();
    if (auto* st = self.input(1)) {
      Scalar acc = 0;
      for (Index n = 0; n < N; ++n) {
        const CMatMap nz(noise.data() + (shared ? 0 : n * P), P, 1);
        acc += (CMatMap(self.grad.data() + n * C * P, P, C).transpose() * nz).sum();
      }
      st->grad_ref()[0] += acc;
    }
  });
}

/// Appends the minibatch standard-deviation channel: for each group of
/// `group_size` samples, the mean over features of the per-feature std.
template <typename Scalar>
Var<Scalar> minibatch_stddev(const Var<Scalar>& x, Index group_size) {
  const Index N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), F = C * H * W, P = H * W;
  Index G = std::min(group_size, N);
  while (N % G) --G;
  const Index M = N / G;
  // Sample n = g * M + m, as in a [G, M, ...] reshape.
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> mu = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(F, M);
  const auto xv = x.value().matrix(F, N);
  for (Index g = 0; g < G; ++g) mu += xv.middleCols(g * M, M);
  mu /= static_cast<Scalar>(G);
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> var = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(F, M);
  for (Index g = 0; g < G; ++g) var.array() += (xv.middleCols(g * M, M) - mu).array().square();
  var /= static_cast<Scalar>(G);
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> sd = (var.array() + Scalar(1e-8)).sqrt().matrix();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> stat = sd.colwise().mean().transpose();

  Tensor<Scalar> out({N, C + 1, H, W});
  for (Index n = 0; n < N; ++n) {
    std::copy_n(x.value().data() + n * F, F, out.data() + n * (F + P));
    std::fill_n(out.data() + n * (F + P) + F, P, stat[n % M]);
  }
  return make_result<Scalar>(std::move(out), {x}, [=](Node<Scalar>& self) {
    auto* in = self.input(0);
    if (!in) return;
    auto gx = in->grad_ref().matrix(F, N);
    const auto gm = self.grad.matrix(F + P, N);
    gx += gm.topRows(F);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> gstat = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(M);
    for (Index n = 0; n < N; ++n) gstat[n % M] += gm.col(n).bottomRows(P).sum();
    const auto xs = self.inputs[0]->value.matrix(F, N);
    for (Index g = 0; g < G; ++g) {
      for (Index m = 0; m < M; ++m) {
        const Scalar coef = gstat[m] / static_cast<Scalar>(F * G);
        gx.col(g * M + m).array() += coef * (xs.col(g * M + m) - mu.col(m)).array() / sd.col(m).array();
      }
    }
  });
}

/// Per-sample geometric/photometric augmentation; linear in x.
struct AugmentParams {
  bool flip = false;
  int shift_x = 0;
  int shift_y = 0;
  double brightness = 0.0;
};

template <typename Scalar>
Var<Scalar> augment(const Var<Scalar>& x, const std::vector<AugmentParams>& params) {
  const Index N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  detail::require(static_cast<Index>(params.size()) == N, "augment: one parameter set per sample required");
  // Source index for each output pixel, -1 when shifted in from outside.
  auto source = [=](const AugmentParams& p, Index y, Index xx) -> Index {
    const Index sy = y - p.shift_y;
    Index sx = xx - p.shift_x;
    if (sy < 0 || sy >= H || sx < 0 || sx >= W) return -1;
    if (p.flip) sx = W - 1 - sx;
    return sy * W + sx;
  };
  Tensor<Scalar> out(x.shape());
  for (Index n = 0; n < N; ++n) {
    const auto& p = params[n];
    for (Index c = 0; c < C; ++c) {
      const Scalar* src = x.value().data() + (n * C + c) * H * W;
      Scalar* dst = out.data() + (n * C + c) * H * W;
      for (Index y = 0; y < H; ++y)
        for (Index xx = 0; xx < W; ++xx) {
          const Index s = source(p, y, xx);
          dst[y * W + xx] = (s < 0 ? Scalar(0) : src[s]) + static_cast<Scalar>(p.brightness);
        }
    }
  }
  return make_result<Scalar>(std::move(out), {x}, [=](Node<Scalar>& self) {
    auto* in = self.input(0);
    if (!in) return;
    for (Index n = 0; n < N; ++n)
      for (Index c = 0; c < C; ++c) {
        const Scalar* g = self.grad.data() + (n * C + c) * H * W;
        Scalar* dst = in->grad_ref().data() + (n * C + c) * H * W;
        for (Index y = 0; y < H; ++y)
          for (Index xx = 0; xx < W; ++xx) {
            const Index s = source(params[n], y, xx);
            if (s >= 0) dst[s] += g[y * W + xx];
          }
      }
  });
}

}  // namespace semtex
