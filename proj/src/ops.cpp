#include "csmae/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "csmae/errors.hpp"

namespace csmae::ops {

namespace {

using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;
using Strided = Eigen::OuterStride<>;
using StridedMap = Eigen::Map<Mat, 0, Strided>;
using ConstStridedMap = Eigen::Map<const Mat, 0, Strided>;
using NodePtr = std::shared_ptr<TensorNode>;

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

ConstMatMap cmap(const Buffer& v, std::size_t r, std::size_t c) {
  return ConstMatMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

MatMap mmap(Buffer& v, std::size_t r, std::size_t c) {
  return MatMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) {
    throw DimensionError(std::string(op) + ": expected 2-D tensor, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_finite(std::span<const Real> values, const char* op) {
  for (Real v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

// Splits a shape around `axis` into (outer, extent, inner) for strided loops.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, const char* name, Fwd fwd, Deriv deriv) {
  Buffer out(x.numel());
  const auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xs[i]);
  const bool rec = recording({&x});
  Tensor y(x.shape(), std::move(out), rec);
  if (rec) {
    NodePtr xn = x.node(), yn = y.node();
    Tape::active()->record(name, {&x}, y, [xn, yn, deriv] {
      auto& gx = xn->grad_buffer();
      const auto& gy = yn->grad;
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * deriv(xn->data[i], yn->data[i]);
    });
  }
  return y;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Buffer out(m * n);
  mmap(out, m, n).noalias() = cmap(a.node()->data, m, k) * cmap(b.node()->data, k, n);
  const bool rec = recording({&a, &b});
  Tensor c({m, n}, std::move(out), rec);
  if (rec) {
    NodePtr an = a.node(), bn = b.node(), cn = c.node();
    Tape::active()->record("matmul", {&a, &b}, c, [an, bn, cn, m, k, n] {
      const auto g = cmap(cn->grad, m, n);
      if (an->requires_grad) mmap(an->grad_buffer(), m, k).noalias() += g * cmap(bn->data, k, n).transpose();
      if (bn->requires_grad) mmap(bn->grad_buffer(), k, n).noalias() += cmap(an->data, m, k).transpose() * g;
    });
  }
  return c;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(0) || bias.numel() != w.dim(1)) {
    throw DimensionError("linear: incompatible shapes x" + shape_str(x.shape()) + " w" + shape_str(w.shape()) +
                         " bias" + shape_str(bias.shape()));
  }
  const std::size_t n = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  Buffer out(n * out_dim);
  auto o = mmap(out, n, out_dim);
  o.noalias() = cmap(x.node()->data, n, in) * cmap(w.node()->data, in, out_dim);
  o.rowwise() += cmap(bias.node()->data, 1, out_dim).row(0);
  const bool rec = recording({&x, &w, &bias});
  Tensor y({n, out_dim}, std::move(out), rec);
  if (rec) {
    NodePtr xn = x.node(), wn = w.node(), bn = bias.node(), yn = y.node();
    Tape::active()->record("linear", {&x, &w, &bias}, y, [xn, wn, bn, yn, n, in, out_dim] {
      const auto g = cmap(yn->grad, n, out_dim);
      if (xn->requires_grad) mmap(xn->grad_buffer(), n, in).noalias() += g * cmap(wn->data, in, out_dim).transpose();
      if (wn->requires_grad) mmap(wn->grad_buffer(), in, out_dim).noalias() += cmap(xn->data, n, in).transpose() * g;
      if (bn->requires_grad) mmap(bn->grad_buffer(), 1, out_dim) += g.colwise().sum();
    });
  }
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  const bool rec = recording({&a, &b});
  Tensor y(a.shape(), std::move(out), rec);
  if (rec) {
    NodePtr an = a.node(), bn = b.node(), yn = y.node();
    Tape::active()->record("add", {&a, &b}, y, [an, bn, yn] {
      for (const NodePtr& in : {an, bn}) {
        if (!in->requires_grad) continue;
        auto& g = in->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i];
      }
    });
  }
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  const bool rec = recording({&a, &b});
  Tensor y(a.shape(), std::move(out), rec);
  if (rec) {
    NodePtr an = a.node(), bn = b.node(), yn = y.node();
    Tape::active()->record("sub", {&a, &b}, y, [an, bn, yn] {
      if (an->requires_grad) {
        auto& g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= yn->grad[i];
      }
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  const bool rec = recording({&a, &b});
  Tensor y(a.shape(), std::move(out), rec);
  if (rec) {
    NodePtr an = a.node(), bn = b.node(), yn = y.node();
    Tape::active()->record("mul", {&a, &b}, y, [an, bn, yn] {
      if (an->requires_grad) {
        auto& g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i] * bn->data[i];
      }
      if (bn->requires_grad) {
        auto& g = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i] * an->data[i];
      }
    });
  }
  return y;
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  require_2d(x, "add_row");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (row.numel() != d) {
    throw DimensionError("add_row: row " + shape_str(row.shape()) + " does not match " + shape_str(x.shape()));
  }
  Buffer out(x.numel());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = x.data()[r * d + c] + row.data()[c];
  const bool rec = recording({&x, &row});
  Tensor y(x.shape(), std::move(out), rec);
  if (rec) {
    NodePtr xn = x.node(), rn = row.node(), yn = y.node();
    Tape::active()->record("add_row", {&x, &row}, y, [xn, rn, yn, n, d] {
      if (xn->requires_grad) {
        auto& g = xn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i];
      }
      if (rn->requires_grad) {
        auto& g = rn->grad_buffer();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < d; ++c) g[c] += yn->grad[r * d + c];
      }
    });
  }
  return y;
}

Tensor scale(const Tensor& x, Real factor) {
  return unary(x, "scale", [factor](Real v) { return v * factor; }, [factor](Real, Real) { return factor; });
}

Tensor square(const Tensor& x) {
  return unary(x, "square", [](Real v) { return v * v; }, [](Real v, Real) { return Real(2) * v; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, "abs", [](Real v) { return std::abs(v); },
      [](Real v, Real) { return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0)); });
}

Tensor log(const Tensor& x) {
  for (Real v : x.data()) {
    if (!(v > 0)) throw NumericError("log: non-positive input " + std::to_string(v));
  }
  return unary(x, "log", [](Real v) { return std::log(v); }, [](Real v, Real) { return Real(1) / v; });
}

Tensor gelu(const Tensor& x) {
  constexpr Real inv_sqrt2 = Real(0.70710678118654752440);
  constexpr Real inv_sqrt_2pi = Real(0.39894228040143267794);
  return unary(
      x, "gelu", [](Real v) { return Real(0.5) * v * (Real(1) + std::erf(v * inv_sqrt2)); },
      [](Real v, Real) {
        const Real cdf = Real(0.5) * (Real(1) + std::erf(v * inv_sqrt2));
        return cdf + v * inv_sqrt_2pi * std::exp(Real(-0.5) * v * v);
      });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "softmax");
  require_finite(x.data(), "softmax");
  const auto xs = x.data();
  Buffer out(x.numel());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      Real mx = xs[base];
      for (std::size_t j = 1; j < s.extent; ++j) mx = std::max(mx, xs[base + j * s.inner]);
      Real total = 0;
      for (std::size_t j = 0; j < s.extent; ++j) {
        const Real e = std::exp(xs[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.extent; ++j) out[base + j * s.inner] /= total;
    }
  }
  const bool rec = recording({&x});
  Tensor y(x.shape(), std::move(out), rec);
  if (rec) {
    NodePtr xn = x.node(), yn = y.node();
    Tape::active()->record("softmax", {&x}, y, [xn, yn, s] {
      auto& gx = xn->grad_buffer();
      const auto& gy = yn->grad;
      const auto& ys = yn->data;
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.extent * s.inner + i;
          Real dot = 0;
          for (std::size_t j = 0; j < s.extent; ++j) dot += gy[base + j * s.inner] * ys[base + j * s.inner];
          for (std::size_t j = 0; j < s.extent; ++j) {
            const std::size_t at = base + j * s.inner;
            gx[at] += ys[at] * (gy[at] - dot);
          }
        }
      }
    });
  }
  return y;
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "log_softmax");
  require_finite(x.data(), "log_softmax");
  const auto xs = x.data();
  Buffer out(x.numel());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      Real mx = xs[base];
      for (std::size_t j = 1; j < s.extent; ++j) mx = std::max(mx, xs[base + j * s.inner]);
      Real total = 0;
      for (std::size_t j = 0; j < s.extent; ++j) total += std::exp(xs[base + j * s.inner] - mx);
      const Real lse = mx + std::log(total);
      for (std::size_t j = 0; j < s.extent; ++j) out[base + j * s.inner] = xs[base + j * s.inner] - lse;
    }
  }
  const bool rec = recording({&x});
  Tensor y(x.shape(), std::move(out), rec);
  if (rec) {
    NodePtr xn = x.node(), yn = y.node();
    Tape::active()->record("log_softmax", {&x}, y, [xn, yn, s] {
      auto& gx = xn->grad_buffer();
      const auto& gy = yn->grad;
      const auto& ys = yn->data;
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.extent * s.inner + i;
          Real total = 0;
          for (std::size_t j = 0; j < s.extent; ++j) total += gy[base + j * s.inner];
          for (std::size_t j = 0; j < s.extent; ++j) {
            const std::size_t at = base + j * s.inner;
            gx[at] += gy[at] - std::exp(ys[at]) * total;
          }
        }
      }
    });
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps) {
  if (x.ndim() == 0) throw DimensionError("layer_norm: empty shape");
  const std::size_t k = x.shape().back();
  const std::size_t rows = x.numel() / k;
  if (gain.numel() != k || bias.numel() != k) {
    throw DimensionError("layer_norm: gain" + shape_str(gain.shape()) + "/bias" + shape_str(bias.shape()) +
                         " do not match " + shape_str(x.shape()));
  }
  if (!(eps > 0)) throw ConfigError("layer_norm: eps must be positive");
  const auto xs = x.data();
  const auto gs = gain.data();
  const auto bs = bias.data();
  Buffer out(x.numel());
  Buffer xhat(x.numel());
  Buffer rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = xs.data() + r * k;
    Real mu = 0;
    for (std::size_t c = 0; c < k; ++c) mu += row[c];
    mu /= Real(k);
    Real var = 0;
    for (std::size_t c = 0; c < k; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= Real(k);
    rstd[r] = Real(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < k; ++c) {
      const Real h = (row[c] - mu) * rstd[r];
      xhat[r * k + c] = h;
      out[r * k + c] = h * gs[c] + bs[c];
    }
  }
  const bool rec = recording({&x, &gain, &bias});
  Tensor y(x.shape(), std::move(out), rec);
  if (rec) {
    NodePtr xn = x.node(), gn = gain.node(), bn = bias.node(), yn = y.node();
    Tape::active()->record(
        "layer_norm", {&x, &gain, &bias}, y,
        [xn, gn, bn, yn, xhat = std::move(xhat), rstd = std::move(rstd), rows, k] {
          const auto& gy = yn->grad;
          if (gn->requires_grad) {
            auto& gg = gn->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < k; ++c) gg[c] += gy[r * k + c] * xhat[r * k + c];
          }
          if (bn->requires_grad) {
            auto& gb = bn->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < k; ++c) gb[c] += gy[r * k + c];
          }
          if (xn->requires_grad) {
            auto& gx = xn->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
              Real mean_d = 0, mean_dx = 0;
              for (std::size_t c = 0; c < k; ++c) {
                const Real d = gy[r * k + c] * gn->data[c];
                mean_d += d;
                mean_dx += d * xhat[r * k + c];
              }
              mean_d /= Real(k);
              mean_dx /= Real(k);
              for (std::size_t c = 0; c < k; ++c) {
                const Real d = gy[r * k + c] * gn->data[c];
                gx[r * k + c] += rstd[r] * (d - mean_d - xhat[r * k + c] * mean_dx);
              }
            }
          }
        });
  }
  return y;
}

Tensor sum(const Tensor& x) {
  Real total = 0;
  for (Real v : x.data()) total += v;
  const bool rec = recording({&x});
  Tensor y({1}, {total}, rec);
  if (rec) {
    NodePtr xn = x.node(), yn = y.node();
    Tape::active()->record("sum", {&x}, y, [xn, yn] {
      auto& g = xn->grad_buffer();
      for (Real& v : g) v += yn->grad[0];
    });
  }
  return y;
}

Tensor mean(const Tensor& x) {
  Real total = 0;
  for (Real v : x.data()) total += v;
  const Real inv = Real(1) / Real(x.numel());
  const bool rec = recording({&x});
  Tensor y({1}, {total * inv}, rec);
  if (rec) {
    NodePtr xn = x.node(), yn = y.node();
    Tape::active()->record("mean", {&x}, y, [xn, yn, inv] {
      auto& g = xn->grad_buffer();
      for (Real& v : g) v += yn->grad[0] * inv;
    });
  }
  return y;
}

Tensor mean(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "mean");
  Shape out_shape = x.shape();
  out_shape[axis] = 1;
  const Real inv = Real(1) / Real(s.extent);
  const auto xs = x.data();
  Buffer out(s.outer * s.inner, Real(0));
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.extent; ++j)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += xs[(o * s.extent + j) * s.inner + i];
  for (Real& v : out) v *= inv;
  const bool rec = recording({&x});
  Tensor y(std::move(out_shape), std::move(out), rec);
  if (rec) {
    NodePtr xn = x.node(), yn = y.node();
    Tape::active()->record("mean_axis", {&x}, y, [xn, yn, s, inv] {
      auto& g = xn->grad_buffer();
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t j = 0; j < s.extent; ++j)
          for (std::size_t i = 0; i < s.inner; ++i)
            g[(o * s.extent + j) * s.inner + i] += yn->grad[o * s.inner + i] * inv;
    });
  }
  return y;
}

Tensor transpose(const Tensor& x) {
  require_2d(x, "transpose");
  const std::size_t n = x.dim(0), m = x.dim(1);
  Buffer out(x.numel());
  mmap(out, m, n) = cmap(x.node()->data, n, m).transpose();
  const bool rec = recording({&x});
  Tensor y({m, n}, std::move(out), rec);
  if (rec) {
    NodePtr xn = x.node(), yn = y.node();
    Tape::active()->record("transpose", {&x}, y, [xn, yn, n, m] {
      mmap(xn->grad_buffer(), n, m) += cmap(yn->grad, m, n).transpose();
    });
  }
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  const bool rec = recording({&x});
  Tensor y(std::move(shape), Buffer(x.data().begin(), x.data().end()), rec);
  if (rec) {
    NodePtr xn = x.node(), yn = y.node();
    Tape::active()->record("reshape", {&x}, y, [xn, yn] {
      auto& g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i];
    });
  }
  return y;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  require_2d(x, "gather_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (indices.empty()) throw DimensionError("gather_rows: empty index list");
  Buffer out(indices.size() * d);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= n) {
      throw IndexError("gather_rows: index " + std::to_string(indices[r]) + " out of range for " +
                       std::to_string(n) + " rows");
    }
    std::copy_n(x.data().data() + indices[r] * d, d, out.data() + r * d);
  }
  const bool rec = recording({&x});
  Tensor y({indices.size(), d}, std::move(out), rec);
  if (rec) {
    NodePtr xn = x.node(), yn = y.node();
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    Tape::active()->record("gather_rows", {&x}, y, [xn, yn, idx = std::move(idx), d] {
      auto& g = xn->grad_buffer();
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < d; ++c) g[idx[r] * d + c] += yn->grad[r * d + c];
    });
  }
  return y;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t d = parts.front().cols();
  std::size_t total = 0;
  bool rec = false;
  for (const Tensor& p : parts) {
    if (p.cols() != d) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts.front().shape()) + " vs " +
                           shape_str(p.shape()));
    }
    total += p.rows();
    rec = rec || p.requires_grad();
  }
  rec = rec && Tape::active() != nullptr;
  Buffer out;
  out.reserve(total * d);
  for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  Tensor y({total, d}, std::move(out), rec);
  if (rec) {
    std::vector<NodePtr> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.node());
    NodePtr yn = y.node();
    Tape::active()->record("concat_rows", parts, y, [nodes = std::move(nodes), yn] {
      std::size_t offset = 0;
      for (const NodePtr& p : nodes) {
        if (p->requires_grad) {
          auto& g = p->grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[offset + i];
        }
        offset += p->data.size();
      }
    });
  }
  return y;
}

Tensor attention(const Tensor& qkv, std::size_t heads) {
  require_2d(qkv, "attention");
  const std::size_t n = qkv.dim(0), packed = qkv.dim(1);
  if (heads == 0 || packed % 3 != 0 || (packed / 3) % heads != 0) {
    throw DimensionError("attention: packed width " + std::to_string(packed) + " incompatible with " +
                         std::to_string(heads) + " heads");
  }
  const std::size_t d = packed / 3, dh = d / heads;
  const Real scale_factor = Real(1) / std::sqrt(Real(dh));
  const auto en = static_cast<Eigen::Index>(n), edh = static_cast<Eigen::Index>(dh);
  const Strided qkv_stride(static_cast<Eigen::Index>(packed)), out_stride(static_cast<Eigen::Index>(d));

  Buffer out(n * d);
  Buffer probs(heads * n * n);
  const Real* base = qkv.data().data();
  for (std::size_t h = 0; h < heads; ++h) {
    ConstStridedMap q(base + h * dh, en, edh, qkv_stride);
    ConstStridedMap k(base + d + h * dh, en, edh, qkv_stride);
    ConstStridedMap v(base + 2 * d + h * dh, en, edh, qkv_stride);
    MatMap a(probs.data() + h * n * n, en, en);
    a.noalias() = (q * k.transpose()) * scale_factor;
    for (Eigen::Index r = 0; r < en; ++r) {
      auto row = a.row(r);
      row.array() = (row.array() - row.maxCoeff()).exp();
      row /= row.sum();
    }
    StridedMap o(out.data() + h * dh, en, edh, out_stride);
    o.noalias() = a * v;
  }
  const bool rec = recording({&qkv});
  Tensor y({n, d}, std::move(out), rec);
  if (rec) {
    NodePtr xn = qkv.node(), yn = y.node();
    Tape::active()->record(
        "attention", {&qkv}, y,
        [xn, yn, probs = std::move(probs), heads, n, d, dh, scale_factor, en, edh, qkv_stride, out_stride] {
          auto& gx = xn->grad_buffer();
          const Real* xs = xn->data.data();
          Mat da(en, en);
          for (std::size_t h = 0; h < heads; ++h) {
            ConstStridedMap q(xs + h * dh, en, edh, qkv_stride);
            ConstStridedMap k(xs + d + h * dh, en, edh, qkv_stride);
            ConstStridedMap v(xs + 2 * d + h * dh, en, edh, qkv_stride);
            ConstMatMap a(probs.data() + h * n * n, en, en);
            ConstStridedMap go(yn->grad.data() + h * dh, en, edh, out_stride);
            StridedMap gq(gx.data() + h * dh, en, edh, qkv_stride);
            StridedMap gk(gx.data() + d + h * dh, en, edh, qkv_stride);
            StridedMap gv(gx.data() + 2 * d + h * dh, en, edh, qkv_stride);
            gv.noalias() += a.transpose() * go;
            da.noalias() = go * v.transpose();
            // softmax backward, row-wise: ds = a * (da - <da, a>)
            for (Eigen::Index r = 0; r < en; ++r) {
              const Real dot = da.row(r).dot(a.row(r));
              da.row(r) = (a.row(r).array() * (da.row(r).array() - dot)).matrix() * scale_factor;
            }
            gq.noalias() += da * k;
            gk.noalias() += da.transpose() * q;
          }
        });
  }
  return y;
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  require_2d(logits, "cross_entropy");
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  if (labels.size() != b) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(b) +
                         " rows");
  }
  require_finite(logits.data(), "cross_entropy");
  const auto xs = logits.data();
  Buffer probs(b * c);
  Real total = 0;
  for (std::size_t r = 0; r < b; ++r) {
    if (labels[r] >= c) throw IndexError("cross_entropy: label " + std::to_string(labels[r]) + " out of range");
    const Real* row = xs.data() + r * c;
    const Real mx = *std::max_element(row, row + c);
    Real z = 0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[r * c + j] = std::exp(row[j] - mx);
      z += probs[r * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[r * c + j] /= z;
    total += mx + std::log(z) - row[labels[r]];
  }
  const bool rec = recording({&logits});
  Tensor y({1}, {total / Real(b)}, rec);
  if (rec) {
    NodePtr xn = logits.node(), yn = y.node();
    std::vector<std::size_t> lab(labels.begin(), labels.end());
    Tape::active()->record("cross_entropy", {&logits}, y,
                           [xn, yn, probs = std::move(probs), lab = std::move(lab), b, c] {
                             auto& g = xn->grad_buffer();
                             const Real scale_factor = yn->grad[0] / Real(b);
                             for (std::size_t r = 0; r < b; ++r) {
                               for (std::size_t j = 0; j < c; ++j) {
                                 const Real onehot = j == lab[r] ? Real(1) : Real(0);
                                 g[r * c + j] += scale_factor * (probs[r * c + j] - onehot);
                               }
                             }
                           });
  }
  return y;
}

Tensor detach(const Tensor& x) {
  return Tensor(x.shape(), Buffer(x.data().begin(), x.data().end()), false);
}

}  // namespace csmae::ops
