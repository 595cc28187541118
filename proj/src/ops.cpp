#include "glmotion/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace glmotion {

namespace {

// C[m,n] += A[m,k] B[k,n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* A, const double* B,
             double* C) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c = C + i * n;
    const double* a = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p];
      if (av == 0.0) continue;
      const double* b = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C[m,n] += A[m,k] B[n,k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* A, const double* B,
             double* C) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    double* c = C + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* b = B + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p] * b[p];
      c[j] += acc;
    }
  }
}

// C[m,n] += A[k,m]^T B[k,n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* A, const double* B,
             double* C) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* a = A + p * m;
    const double* b = B + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i];
      if (av == 0.0) continue;
      double* c = C + i * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
}

}  // namespace

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  require_defined(a, "elementwise");
  require_defined(b, "elementwise");
  const std::size_t na = a.numel();
  const std::size_t nb = b.numel();
  if (!(nb == 1 || is_suffix(b.shape(), a.shape()))) {
    throw ShapeError("elementwise: cannot broadcast " + shape_str(b.shape()) + " onto " +
                     shape_str(a.shape()));
  }
  const auto& av = a.values();
  const auto& bv = b.values();
  if (op == ElementwiseOp::div) {
    for (double x : bv) {
      if (x == 0.0) throw NumericError("div: division by exact zero");
    }
  }
  std::vector<double> out(na);
  switch (op) {
    case ElementwiseOp::add:
      for (std::size_t i = 0; i < na; ++i) out[i] = av[i] + bv[i % nb];
      break;
    case ElementwiseOp::sub:
      for (std::size_t i = 0; i < na; ++i) out[i] = av[i] - bv[i % nb];
      break;
    case ElementwiseOp::mul:
      for (std::size_t i = 0; i < na; ++i) out[i] = av[i] * bv[i % nb];
      break;
    case ElementwiseOp::div:
      for (std::size_t i = 0; i < na; ++i) out[i] = av[i] / bv[i % nb];
      break;
  }
  static constexpr const char* names[] = {"add", "sub", "mul", "div"};
  auto ai = a.impl();
  auto bi = b.impl();
  return record_op(names[static_cast<int>(op)], a.shape(), std::move(out), {a, b},
                   [op, ai, bi, na, nb](const TensorImpl& o) {
                     const auto& g = o.grad;
                     for (std::size_t i = 0; i < na; ++i) {
                       const std::size_t j = i % nb;
                       switch (op) {
                         case ElementwiseOp::add:
                           ai->accumulate(i, g[i]);
                           bi->accumulate(j, g[i]);
                           break;
                         case ElementwiseOp::sub:
                           ai->accumulate(i, g[i]);
                           bi->accumulate(j, -g[i]);
                           break;
                         case ElementwiseOp::mul:
                           ai->accumulate(i, g[i] * bi->data[j]);
                           bi->accumulate(j, g[i] * ai->data[i]);
                           break;
                         case ElementwiseOp::div: {
                           const double bj = bi->data[j];
                           ai->accumulate(i, g[i] / bj);
                           bi->accumulate(j, -g[i] * ai->data[i] / (bj * bj));
                           break;
                         }
                       }
                     }
                   });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::div, a, b); }

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values());
  for (double& v : out) v *= factor;
  auto ai = a.impl();
  return record_op("scale", a.shape(), std::move(out), {a}, [ai, factor](const TensorImpl& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i) ai->accumulate(i, o.grad[i] * factor);
  });
}

Tensor add_scalar(const Tensor& a, double value) {
  std::vector<double> out(a.values());
  for (double& v : out) v += value;
  auto ai = a.impl();
  return record_op("add_scalar", a.shape(), std::move(out), {a}, [ai](const TensorImpl& o) {
    for (std::size_t i = 0; i < o.grad.size(); ++i) ai->accumulate(i, o.grad[i]);
  });
}

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() < 1 || b.rank() != 2) {
    throw ShapeError("matmul: expected a[..., k] and 2-d b, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t k = a.shape().back();
  const std::size_t m = a.numel() / std::max<std::size_t>(k, 1);
  const std::size_t bk = transpose_b ? b.dim(1) : b.dim(0);
  const std::size_t n = transpose_b ? b.dim(0) : b.dim(1);
  if (bk != k) {
    throw ShapeError("matmul: inner dimensions differ: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + (transpose_b ? "^T" : ""));
  }
  std::vector<double> out(m * n, 0.0);
  if (transpose_b) {
    gemm_nt(m, n, k, a.values().data(), b.values().data(), out.data());
  } else {
    gemm_nn(m, n, k, a.values().data(), b.values().data(), out.data());
  }
  Shape shape = a.shape();
  shape.back() = n;
  auto ai = a.impl();
  auto bi = b.impl();
  return record_op("matmul", std::move(shape), std::move(out), {a, b},
                   [ai, bi, m, n, k, transpose_b](const TensorImpl& o) {
                     const double* g = o.grad.data();
                     if (ai->requires_grad) {
                       double* ga = ai->grad_buffer().data();
                       if (transpose_b) {
                         gemm_nn(m, k, n, g, bi->data.data(), ga);
                       } else {
                         gemm_nt(m, k, n, g, bi->data.data(), ga);
                       }
                     }
                     if (bi->requires_grad) {
                       double* gb = bi->grad_buffer().data();
                       if (transpose_b) {
                         gemm_tn(n, k, m, g, ai->data.data(), gb);
                       } else {
                         gemm_tn(k, n, m, ai->data.data(), g, gb);
                       }
                     }
                   });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add(matmul(x, weight, /*transpose_b=*/true), bias);
}

Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_defined(a, "batched_matmul");
  require_defined(b, "batched_matmul");
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) {
    throw ShapeError("batched_matmul: expected [B,m,k] and [B,k,n], got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  if (bk != k) {
    throw ShapeError("batched_matmul: inner dimensions differ: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t s = 0; s < batch; ++s) {
    const double* as = a.values().data() + s * m * k;
    const double* bs = b.values().data() + s * k * n;
    double* cs = out.data() + s * m * n;
    if (transpose_b) {
      gemm_nt(m, n, k, as, bs, cs);
    } else {
      gemm_nn(m, n, k, as, bs, cs);
    }
  }
  auto ai = a.impl();
  auto bi = b.impl();
  return record_op("batched_matmul", {batch, m, n}, std::move(out), {a, b},
                   [ai, bi, batch, m, n, k, transpose_b](const TensorImpl& o) {
                     double* ga = ai->requires_grad ? ai->grad_buffer().data() : nullptr;
                     double* gb = bi->requires_grad ? bi->grad_buffer().data() : nullptr;
                     for (std::size_t s = 0; s < batch; ++s) {
                       const double* g = o.grad.data() + s * m * n;
                       const double* as = ai->data.data() + s * m * k;
                       const double* bs = bi->data.data() + s * k * n;
                       if (ga) {
                         if (transpose_b) {
                           gemm_nn(m, k, n, g, bs, ga + s * m * k);
                         } else {
                           gemm_nt(m, k, n, g, bs, ga + s * m * k);
                         }
                       }
                       if (gb) {
                         if (transpose_b) {
                           gemm_tn(n, k, m, g, as, gb + s * k * n);
                         } else {
                           gemm_tn(k, n, m, as, g, gb + s * k * n);
                         }
                       }
                     }
                   });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  auto xi = x.impl();
  return record_op("reshape", std::move(shape), x.values(), {x}, [xi](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    auto g = xi->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const std::size_t r = x.rank();
  if (axes.size() != r) throw ShapeError("permute: axis count does not match rank");
  std::vector<bool> seen(r, false);
  for (std::size_t a : axes) {
    if (a >= r || seen[a]) throw ShapeError("permute: invalid axis list");
    seen[a] = true;
  }
  const Shape& in_shape = x.shape();
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(r);
  std::vector<std::size_t> stride_of_out(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in_shape[axes[i]];
    stride_of_out[i] = in_strides[axes[i]];
  }
  const std::size_t n = x.numel();
  auto source = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> counter(r, 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (*source)[i] = offset;
    for (std::size_t d = r; d-- > 0;) {
      ++counter[d];
      offset += stride_of_out[d];
      if (counter[d] < out_shape[d]) break;
      offset -= stride_of_out[d] * out_shape[d];
      counter[d] = 0;
    }
  }
  std::vector<double> out(n);
  const auto& xv = x.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[(*source)[i]];
  auto xi = x.impl();
  return record_op("permute", std::move(out_shape), std::move(out), {x},
                   [xi, source](const TensorImpl& o) {
                     if (!xi->requires_grad) return;
                     auto g = xi->grad_buffer();
                     for (std::size_t i = 0; i < o.grad.size(); ++i) g[(*source)[i]] += o.grad[i];
                   });
}

Tensor slice(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0 || begin > end || end > x.dim(0)) {
    throw ShapeError("slice: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + shape_str(x.shape()));
  }
  const std::size_t row = x.numel() / std::max<std::size_t>(x.dim(0), 1);
  std::vector<double> out(x.values().begin() + static_cast<std::ptrdiff_t>(begin * row),
                          x.values().begin() + static_cast<std::ptrdiff_t>(end * row));
  Shape shape = x.shape();
  shape[0] = end - begin;
  auto xi = x.impl();
  const std::size_t offset = begin * row;
  return record_op("slice", std::move(shape), std::move(out), {x}, [xi, offset](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    auto g = xi->grad_buffer();
    for (std::size_t i = 0; i < o.grad.size(); ++i) g[offset + i] += o.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw ShapeError("concat: axis out of range");
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
  std::vector<std::size_t> chunk(parts.size());
  Shape out_shape = ref;
  out_shape[axis] = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Shape& s = parts[p].shape();
    if (s.size() != ref.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != ref[i]) {
        throw ShapeError("concat: " + shape_str(s) + " incompatible with " + shape_str(ref));
      }
    }
    out_shape[axis] += s[axis];
    chunk[p] = parts[p].numel() / std::max<std::size_t>(outer, 1);
  }
  std::size_t row = 0;
  for (std::size_t c : chunk) row += c;
  std::vector<double> out(outer * row);
  std::size_t col = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& v = parts[p].values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o * chunk[p]), chunk[p],
                  out.begin() + static_cast<std::ptrdiff_t>(o * row + col));
    }
    col += chunk[p];
  }
  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (const auto& t : parts) impls.push_back(t.impl());
  return record_op("concat", std::move(out_shape), std::move(out), parts,
                   [impls, chunk, outer, row](const TensorImpl& o) {
                     std::size_t col = 0;
                     for (std::size_t p = 0; p < impls.size(); ++p) {
                       if (impls[p]->requires_grad) {
                         auto g = impls[p]->grad_buffer();
                         for (std::size_t q = 0; q < outer; ++q) {
                           for (std::size_t c = 0; c < chunk[p]; ++c) {
                             g[q * chunk[p] + c] += o.grad[q * row + col + c];
                           }
                         }
                       }
                       col += chunk[p];
                     }
                   });
}

Tensor softmax_masked(const Tensor& logits, std::span<const std::uint8_t> mask) {
  if (logits.rank() == 0) throw ShapeError("softmax_masked: scalar input");
  const std::size_t n = logits.shape().back();
  const std::size_t total = logits.numel();
  const std::size_t rows = n ? total / n : 0;
  const std::size_t msize = mask.size();
  if (msize != 0 && (msize % n != 0 || total % msize != 0)) {
    throw ShapeError("softmax_masked: mask of size " + std::to_string(msize) +
                     " does not cover the trailing axes of " + shape_str(logits.shape()));
  }
  const auto& x = logits.values();
  std::vector<double> out(total);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * n;
    double* yr = out.data() + r * n;
    const std::uint8_t* mr = msize ? mask.data() + (r * n) % msize : nullptr;
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (mr && !mr[j]) continue;
      any = true;
      mx = std::max(mx, xr[j]);
    }
    if (!any) throw MaskError("softmax_masked: row " + std::to_string(r) + " has no valid entry");
    double total_exp = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double z = (mr && !mr[j]) ? kMaskedLogit : xr[j];
      yr[j] = std::exp(z - mx);
      total_exp += yr[j];
    }
    for (std::size_t j = 0; j < n; ++j) yr[j] = (mr && !mr[j]) ? 0.0 : yr[j] / total_exp;
  }
  auto xi = logits.impl();
  return record_op("softmax_masked", logits.shape(), std::move(out), {logits},
                   [xi, n, rows](const TensorImpl& o) {
                     if (!xi->requires_grad) return;
                     auto g = xi->grad_buffer();
                     for (std::size_t r = 0; r < rows; ++r) {
                       const double* y = o.data.data() + r * n;
                       const double* gy = o.grad.data() + r * n;
                       double dot = 0.0;
                       for (std::size_t j = 0; j < n; ++j) dot += y[j] * gy[j];
                       for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (gy[j] - dot);
                     }
                   });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(d) + "]");
  }
  if (eps < 0.0) throw NumericError("layer_norm: eps must be non-negative");
  if (d == 1 && eps == 0.0) throw NumericError("layer_norm: D == 1 with eps == 0 divides by zero");
  const std::size_t rows = x.numel() / d;
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    if (var + eps == 0.0) throw NumericError("layer_norm: zero variance with eps == 0");
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mu) * rs;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gv[j] + bv[j];
    }
  }
  auto xi = x.impl();
  auto gi = gamma.impl();
  auto bi = beta.impl();
  return record_op(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [xi, gi, bi, xhat, rstd, d, rows](const TensorImpl& o) {
        const double inv_d = 1.0 / static_cast<double>(d);
        std::vector<double> dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gy = o.grad.data() + r * d;
          const double* h = xhat->data() + r * d;
          if (gi->requires_grad || bi->requires_grad) {
            for (std::size_t j = 0; j < d; ++j) {
              gi->accumulate(j, gy[j] * h[j]);
              bi->accumulate(j, gy[j]);
            }
          }
          if (!xi->requires_grad) continue;
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            dxhat[j] = gy[j] * gi->data[j];
            s1 += dxhat[j];
            s2 += dxhat[j] * h[j];
          }
          auto gx = xi->grad_buffer();
          const double rs = (*rstd)[r];
          for (std::size_t j = 0; j < d; ++j) {
            gx[r * d + j] += rs * (dxhat[j] - inv_d * s1 - h[j] * inv_d * s2);
          }
        }
      });
}

Tensor gelu(const Tensor& x) {
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
  }
  auto xi = x.impl();
  return record_op("gelu", x.shape(), std::move(out), {x}, [xi](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    auto g = xi->grad_buffer();
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xi->data[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      g[i] += o.grad[i] * (cdf + v * pdf);
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  auto xi = x.impl();
  return record_op("sum", {}, {s}, {x}, [xi](const TensorImpl& o) {
    if (!xi->requires_grad) return;
    auto g = xi->grad_buffer();
    for (double& v : g) v += o.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

namespace {

// -log softmax(row)[target] and the softmax itself
double row_cross_entropy(const double* z, std::size_t c, int target, double* probs) {
  double mx = z[0];
  for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, z[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    probs[j] = std::exp(z[j] - mx);
    s += probs[j];
  }
  for (std::size_t j = 0; j < c; ++j) probs[j] /= s;
  return -(z[target] - mx - std::log(s));
}

Tensor cross_entropy_impl(const char* op, const Tensor& logits, std::span<const int> targets,
                          std::vector<double> weights) {
  if (logits.rank() != 2) throw ShapeError(std::string(op) + ": logits must be [rows, classes]");
  const std::size_t rows = logits.dim(0), c = logits.dim(1);
  if (targets.size() != rows || weights.size() != rows) {
    throw ShapeError(std::string(op) + ": expected " + std::to_string(rows) + " targets");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (weights[r] == 0.0) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= c) {
      throw IndexError(std::string(op) + ": target " + std::to_string(targets[r]) + " at row " +
                       std::to_string(r) + " outside [0, " + std::to_string(c) + ")");
    }
  }
  auto probs = std::make_shared<std::vector<double>>(rows * c, 0.0);
  double total = 0.0;
  const double* z = logits.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    if (weights[r] == 0.0) continue;
    total += weights[r] * row_cross_entropy(z + r * c, c, targets[r], probs->data() + r * c);
  }
  auto li = logits.impl();
  std::vector<int> tgt(targets.begin(), targets.end());
  return record_op(op, {}, {total}, {logits},
                   [li, probs, tgt = std::move(tgt), w = std::move(weights), rows, c](
                       const TensorImpl& o) {
                     if (!li->requires_grad) return;
                     auto g = li->grad_buffer();
                     const double go = o.grad[0];
                     for (std::size_t r = 0; r < rows; ++r) {
                       if (w[r] == 0.0) continue;
                       const double scale = go * w[r];
                       for (std::size_t j = 0; j < c; ++j) {
                         const double onehot = static_cast<int>(j) == tgt[r] ? 1.0 : 0.0;
                         g[r * c + j] += scale * ((*probs)[r * c + j] - onehot);
                       }
                     }
                   });
}

}  // namespace

Tensor cross_entropy_logits(const Tensor& logits, std::span<const int> targets, double weight) {
  if (logits.rank() != 2 || logits.dim(0) == 0) {
    throw ShapeError("cross_entropy_logits: logits must be [B>0, C]");
  }
  const std::size_t rows = logits.dim(0);
  if (targets.size() != rows) throw ShapeError("cross_entropy_logits: target count mismatch");
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= logits.dim(1)) {
      throw IndexError("cross_entropy_logits: target " + std::to_string(targets[r]) +
                       " outside [0, " + std::to_string(logits.dim(1)) + ")");
    }
  }
  return cross_entropy_impl("cross_entropy", logits, targets,
                            std::vector<double>(rows, weight / static_cast<double>(rows)));
}

Tensor weighted_cross_entropy(const Tensor& logits, std::span<const int> targets,
                              std::span<const double> row_weights) {
  return cross_entropy_impl("weighted_cross_entropy", logits, targets,
                            std::vector<double>(row_weights.begin(), row_weights.end()));
}

Tensor masked_time_mean(const Tensor& x, std::span<const std::uint8_t> valid) {
  if (x.rank() != 3) throw ShapeError("masked_time_mean: expected [B, T, E]");
  const std::size_t b = x.dim(0), t = x.dim(1), e = x.dim(2);
  if (valid.size() != b * t) throw ShapeError("masked_time_mean: mask must be [B*T]");
  auto inv_count = std::make_shared<std::vector<double>>(b);
  std::vector<double> out(b * e, 0.0);
  const auto& xv = x.values();
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t count = 0;
    for (std::size_t s = 0; s < t; ++s) {
      if (!valid[i * t + s]) continue;
      ++count;
      for (std::size_t j = 0; j < e; ++j) out[i * e + j] += xv[(i * t + s) * e + j];
    }
    if (count == 0) throw MaskError("masked_time_mean: sequence " + std::to_string(i) + " has no valid frame");
    (*inv_count)[i] = 1.0 / static_cast<double>(count);
    for (std::size_t j = 0; j < e; ++j) out[i * e + j] *= (*inv_count)[i];
  }
  auto xi = x.impl();
  std::vector<std::uint8_t> keep(valid.begin(), valid.end());
  return record_op("masked_time_mean", {b, e}, std::move(out), {x},
                   [xi, inv_count, keep = std::move(keep), b, t, e](const TensorImpl& o) {
                     if (!xi->requires_grad) return;
                     auto g = xi->grad_buffer();
                     for (std::size_t i = 0; i < b; ++i) {
                       for (std::size_t s = 0; s < t; ++s) {
                         if (!keep[i * t + s]) continue;
                         for (std::size_t j = 0; j < e; ++j) {
                           g[(i * t + s) * e + j] += o.grad[i * e + j] * (*inv_count)[i];
                         }
                       }
                     }
                   });
}

}  // namespace glmotion
