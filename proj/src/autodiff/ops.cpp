#include "cross/autodiff/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "cross/kernels/gemm.h"

namespace cross::ad {
namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                              shape_str(b.shape()));
}

[[noreturn]] void shape_error(const char* op, const std::string& what) {
  throw std::invalid_argument(std::string(op) + ": " + what);
}

void require_matrix(const char* op, const Tensor& x) {
  if (!x.defined() || x.rank() != 2) {
    shape_error(op, "expected a matrix, got " + (x.defined() ? shape_str(x.shape()) : std::string("<undefined>")));
  }
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error(op, a, b);
}

void require_mask(const char* op, Mask mask, std::size_t n) {
  if (!mask.empty() && mask.size() != n) {
    shape_error(op, "mask has " + std::to_string(mask.size()) + " entries, expected " + std::to_string(n));
  }
}

bool valid(Mask mask, std::size_t i) { return mask.empty() || mask[i] != 0; }

// Grad buffer of parent i, or nullptr when it does not take gradients.
double* pgrad(Node& self, std::size_t i) {
  Node* p = self.parents[i].get();
  return (p && p->requires_grad) ? p->grad.data() : nullptr;
}

const double* pdata(Node& self, std::size_t i) { return self.parents[i]->data.data(); }

std::vector<double> masked_rows_copy(const double* src, std::size_t n, std::size_t k,
                                     const std::vector<std::uint8_t>& mask) {
  std::vector<double> xm(src, src + n * k);
  for (std::size_t r = 0; r < n; ++r)
    if (!mask[r]) std::fill(xm.begin() + r * k, xm.begin() + (r + 1) * k, 0.0);
  return xm;
}

template <class F, class D>
Tensor unary(const char* op, const Tensor& x, F f, D df) {
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_result(op, x.shape(), std::move(out), {x}, [df](Node& self) {
    double* gx = pgrad(self, 0);
    if (!gx) return;
    const double* xin = pdata(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] * df(xin[i], self.data[i]);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  std::vector<double> out(n * m);
  kernels::gemm_nn(a.data().data(), b.data().data(), out.data(), n, k, m, false);
  return make_result("matmul", {n, m}, std::move(out), {a, b}, [n, k, m](Node& self) {
    if (double* ga = pgrad(self, 0)) kernels::gemm_nt(self.grad.data(), pdata(self, 1), ga, n, m, k, true);
    if (double* gb = pgrad(self, 1)) kernels::gemm_tn(pdata(self, 0), self.grad.data(), gb, n, k, m, true);
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b, Mask row_mask) {
  require_matrix("linear", x);
  require_matrix("linear", w);
  if (x.cols() != w.rows()) shape_error("linear", x, w);
  const std::size_t n = x.rows(), k = x.cols(), m = w.cols();
  if (b.defined() && b.size() != m) shape_error("linear(bias)", w, b);
  require_mask("linear", row_mask, n);

  std::vector<std::uint8_t> mask(row_mask.begin(), row_mask.end());

  std::vector<double> out(n * m, 0.0);
  if (mask.empty()) {
    kernels::gemm_nn(x.data().data(), w.data().data(), out.data(), n, k, m, false);
  } else {
    const auto xm = masked_rows_copy(x.data().data(), n, k, mask);
    kernels::gemm_nn(xm.data(), w.data().data(), out.data(), n, k, m, false);
  }
  if (b.defined()) {
    const auto bias = b.data();
    for (std::size_t r = 0; r < n; ++r) {
      if (!valid(mask, r)) continue;
      for (std::size_t j = 0; j < m; ++j) out[r * m + j] += bias[j];
    }
  }
  std::vector<Tensor> parents{x, w};
  if (b.defined()) parents.push_back(b);
  const bool has_bias = b.defined();
  return make_result("linear", {n, m}, std::move(out), std::move(parents),
                     [n, k, m, mask = std::move(mask), has_bias](Node& self) {
                       std::vector<double> dy = self.grad;
                       if (!mask.empty()) {
                         for (std::size_t r = 0; r < n; ++r)
                           if (!mask[r]) std::fill(dy.begin() + r * m, dy.begin() + (r + 1) * m, 0.0);
                       }
                       if (double* gx = pgrad(self, 0)) kernels::gemm_nt(dy.data(), pdata(self, 1), gx, n, m, k, true);
                       if (double* gw = pgrad(self, 1)) {
                         if (mask.empty()) {
                           kernels::gemm_tn(pdata(self, 0), dy.data(), gw, n, k, m, true);
                         } else {
                           const auto xm = masked_rows_copy(pdata(self, 0), n, k, mask);
                           kernels::gemm_tn(xm.data(), dy.data(), gw, n, k, m, true);
                         }
                       }
                       if (has_bias) {
                         if (double* gb = pgrad(self, 2)) {
                           for (std::size_t r = 0; r < n; ++r)
                             for (std::size_t j = 0; j < m; ++j) gb[j] += dy[r * m + j];
                         }
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (double* g = pgrad(self, p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (double* g = pgrad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (double* g = pgrad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const double* ad = pdata(self, 0);
    const double* bd = pdata(self, 1);
    if (double* g = pgrad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bd[i];
    if (double* g = pgrad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * ad[i];
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary("scale", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary("add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  require_same("minimum", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(a[i], b[i]);
  return make_result("minimum", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const double* ad = pdata(self, 0);
    const double* bd = pdata(self, 1);
    double* ga = pgrad(self, 0);
    double* gb = pgrad(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (ad[i] <= bd[i]) {
        if (ga) ga[i] += self.grad[i];
      } else if (gb) {
        gb[i] += self.grad[i];
      }
    }
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
  return unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor detach(const Tensor& x) {
  return Tensor::from(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) shape_error("reshape", "cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  return make_result("reshape", std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), {x},
                     [](Node& self) {
                       if (double* g = pgrad(self, 0))
                         for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
                     });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) shape_error("concat_cols", "no inputs");
  for (const auto& p : parts) require_matrix("concat_cols", p);
  const std::size_t n = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) shape_error("concat_cols", parts[0], p);
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const auto d = parts[q].data();
    for (std::size_t r = 0; r < n; ++r)
      std::copy_n(d.begin() + r * widths[q], widths[q], out.begin() + r * total + offset);
    offset += widths[q];
  }
  return make_result("concat_cols", {n, total}, std::move(out), parts, [n, total, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t q = 0; q < widths.size(); ++q) {
      if (double* g = pgrad(self, q)) {
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t j = 0; j < widths[q]; ++j) g[r * widths[q] + j] += self.grad[r * total + off + j];
      }
      off += widths[q];
    }
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix("slice_cols", x);
  if (begin >= end || end > x.cols()) {
    shape_error("slice_cols", "range [" + std::to_string(begin) + ", " + std::to_string(end) + ") invalid for " +
                                  shape_str(x.shape()));
  }
  const std::size_t n = x.rows(), m = x.cols(), w = end - begin;
  std::vector<double> out(n * w);
  const auto d = x.data();
  for (std::size_t r = 0; r < n; ++r) std::copy_n(d.begin() + r * m + begin, w, out.begin() + r * w);
  return make_result("slice_cols", {n, w}, std::move(out), {x}, [n, m, w, begin](Node& self) {
    if (double* g = pgrad(self, 0))
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < w; ++j) g[r * m + begin + j] += self.grad[r * w + j];
  });
}

Tensor repeat_rows(const Tensor& x, std::size_t times) {
  require_matrix("repeat_rows", x);
  const std::size_t n = x.rows(), m = x.cols();
  std::vector<double> out(n * times * m);
  const auto d = x.data();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t t = 0; t < times; ++t) std::copy_n(d.begin() + r * m, m, out.begin() + (r * times + t) * m);
  return make_result("repeat_rows", {n * times, m}, std::move(out), {x}, [n, m, times](Node& self) {
    if (double* g = pgrad(self, 0))
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t t = 0; t < times; ++t)
          for (std::size_t j = 0; j < m; ++j) g[r * m + j] += self.grad[(r * times + t) * m + j];
  });
}

Tensor mask_rows(const Tensor& x, Mask row_mask) {
  require_matrix("mask_rows", x);
  const std::size_t n = x.rows(), m = x.cols();
  require_mask("mask_rows", row_mask, n);
  std::vector<std::uint8_t> mask(row_mask.begin(), row_mask.end());
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < n; ++r)
    if (!valid(mask, r)) std::fill(out.begin() + r * m, out.begin() + (r + 1) * m, 0.0);
  return make_result("mask_rows", x.shape(), std::move(out), {x}, [n, m, mask = std::move(mask)](Node& self) {
    if (double* g = pgrad(self, 0))
      for (std::size_t r = 0; r < n; ++r)
        if (valid(mask, r))
          for (std::size_t j = 0; j < m; ++j) g[r * m + j] += self.grad[r * m + j];
  });
}

Tensor row_scale(const Tensor& x, const Tensor& s) {
  require_matrix("row_scale", x);
  const std::size_t n = x.rows(), m = x.cols();
  if (s.size() != n) shape_error("row_scale", x, s);
  std::vector<double> out(n * m);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < m; ++j) out[r * m + j] = x[r * m + j] * s[r];
  return make_result("row_scale", x.shape(), std::move(out), {x, s}, [n, m](Node& self) {
    const double* xd = pdata(self, 0);
    const double* sd = pdata(self, 1);
    double* gx = pgrad(self, 0);
    double* gs = pgrad(self, 1);
    for (std::size_t r = 0; r < n; ++r) {
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double g = self.grad[r * m + j];
        if (gx) gx[r * m + j] += g * sd[r];
        acc += g * xd[r * m + j];
      }
      if (gs) gs[r] += acc;
    }
  });
}

Tensor pick(const Tensor& x, std::span<const std::size_t> index) {
  require_matrix("pick", x);
  const std::size_t n = x.rows(), m = x.cols();
  if (index.size() != n) shape_error("pick", "index has " + std::to_string(index.size()) + " entries for " + shape_str(x.shape()));
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<double> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (idx[r] >= m) shape_error("pick", "column " + std::to_string(idx[r]) + " out of range for " + shape_str(x.shape()));
    out[r] = x[r * m + idx[r]];
  }
  return make_result("pick", {n}, std::move(out), {x}, [m, idx = std::move(idx)](Node& self) {
    if (double* g = pgrad(self, 0))
      for (std::size_t r = 0; r < idx.size(); ++r) g[r * m + idx[r]] += self.grad[r];
  });
}

namespace {

struct RowShape {
  std::size_t rows, cols;
};

RowShape row_shape(const char* op, const Tensor& x) {
  if (x.rank() == 1) return {1, x.shape()[0]};
  require_matrix(op, x);
  return {x.rows(), x.cols()};
}

}  // namespace

Tensor softmax(const Tensor& x, double temperature, Mask mask) {
  if (!(temperature > 0.0)) shape_error("softmax", "temperature must be positive");
  const auto [n, m] = row_shape("softmax", x);
  require_mask("softmax", mask, n * m);
  std::vector<std::uint8_t> mk(mask.begin(), mask.end());
  std::vector<double> out(n * m, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j)
      if (valid(mk, r * m + j)) mx = std::max(mx, x[r * m + j] / temperature);
    if (mx == -std::numeric_limits<double>::infinity()) shape_error("softmax", "row " + std::to_string(r) + " is fully masked");
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (!valid(mk, r * m + j)) continue;
      out[r * m + j] = std::exp(x[r * m + j] / temperature - mx);
      z += out[r * m + j];
    }
    for (std::size_t j = 0; j < m; ++j) out[r * m + j] /= z;
  }
  return make_result("softmax", x.shape(), std::move(out), {x}, [n, m, temperature](Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    for (std::size_t r = 0; r < n; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += self.data[r * m + j] * self.grad[r * m + j];
      for (std::size_t j = 0; j < m; ++j)
        g[r * m + j] += self.data[r * m + j] * (self.grad[r * m + j] - dot) / temperature;
    }
  });
}

Tensor log_softmax(const Tensor& x, double temperature, Mask mask) {
  if (!(temperature > 0.0)) shape_error("log_softmax", "temperature must be positive");
  const auto [n, m] = row_shape("log_softmax", x);
  require_mask("log_softmax", mask, n * m);
  std::vector<std::uint8_t> mk(mask.begin(), mask.end());
  std::vector<double> out(n * m, 0.0);
  std::vector<double> probs(n * m, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j)
      if (valid(mk, r * m + j)) mx = std::max(mx, x[r * m + j] / temperature);
    if (mx == -std::numeric_limits<double>::infinity()) shape_error("log_softmax", "row " + std::to_string(r) + " is fully masked");
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      if (valid(mk, r * m + j)) z += std::exp(x[r * m + j] / temperature - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < m; ++j) {
      if (!valid(mk, r * m + j)) continue;
      out[r * m + j] = x[r * m + j] / temperature - lse;
      probs[r * m + j] = std::exp(out[r * m + j]);
    }
  }
  return make_result("log_softmax", x.shape(), std::move(out), {x},
                     [n, m, temperature, mk = std::move(mk), probs = std::move(probs)](Node& self) {
                       double* g = pgrad(self, 0);
                       if (!g) return;
                       for (std::size_t r = 0; r < n; ++r) {
                         double total = 0.0;
                         for (std::size_t j = 0; j < m; ++j)
                           if (valid(mk, r * m + j)) total += self.grad[r * m + j];
                         for (std::size_t j = 0; j < m; ++j) {
                           if (!valid(mk, r * m + j)) continue;
                           g[r * m + j] += (self.grad[r * m + j] - probs[r * m + j] * total) / temperature;
                         }
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_matrix("layer_norm", x);
  const std::size_t n = x.rows(), m = x.cols();
  if (gamma.defined() && gamma.size() != m) shape_error("layer_norm(gamma)", x, gamma);
  if (beta.defined() && beta.size() != m) shape_error("layer_norm(beta)", x, beta);
  std::vector<double> normed(n * m), inv_std(n), out(n * m);
  for (std::size_t r = 0; r < n; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < m; ++j) mu += x[r * m + j];
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) var += (x[r * m + j] - mu) * (x[r * m + j] - mu);
    var /= static_cast<double>(m);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < m; ++j) {
      normed[r * m + j] = (x[r * m + j] - mu) * inv_std[r];
      const double gj = gamma.defined() ? gamma[j] : 1.0;
      const double bj = beta.defined() ? beta[j] : 0.0;
      out[r * m + j] = gj * normed[r * m + j] + bj;
    }
  }
  std::vector<Tensor> parents{x};
  const bool has_gamma = gamma.defined(), has_beta = beta.defined();
  if (has_gamma) parents.push_back(gamma);
  if (has_beta) parents.push_back(beta);
  return make_result("layer_norm", x.shape(), std::move(out), std::move(parents),
                     [n, m, has_gamma, has_beta, normed = std::move(normed), inv_std = std::move(inv_std)](Node& self) {
                       const double* gm = has_gamma ? pdata(self, 1) : nullptr;
                       double* gx = pgrad(self, 0);
                       double* ggamma = has_gamma ? pgrad(self, 1) : nullptr;
                       double* gbeta = has_beta ? pgrad(self, has_gamma ? 2 : 1) : nullptr;
                       std::vector<double> dyhat(m);
                       for (std::size_t r = 0; r < n; ++r) {
                         double mean_d = 0.0, mean_dy = 0.0;
                         for (std::size_t j = 0; j < m; ++j) {
                           const double go = self.grad[r * m + j];
                           dyhat[j] = go * (gm ? gm[j] : 1.0);
                           mean_d += dyhat[j];
                           mean_dy += dyhat[j] * normed[r * m + j];
                           if (ggamma) ggamma[j] += go * normed[r * m + j];
                           if (gbeta) gbeta[j] += go;
                         }
                         mean_d /= static_cast<double>(m);
                         mean_dy /= static_cast<double>(m);
                         if (gx)
                           for (std::size_t j = 0; j < m; ++j)
                             gx[r * m + j] += inv_std[r] * (dyhat[j] - mean_d - normed[r * m + j] * mean_dy);
                       }
                     });
}

Tensor glu(const Tensor& x) {
  require_matrix("glu", x);
  const std::size_t n = x.rows(), m2 = x.cols();
  if (m2 % 2 != 0) shape_error("glu", "last axis " + std::to_string(m2) + " is odd");
  const std::size_t h = m2 / 2;
  std::vector<double> out(n * h), gate(n * h);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < h; ++j) {
      gate[r * h + j] = 1.0 / (1.0 + std::exp(-x[r * m2 + h + j]));
      out[r * h + j] = x[r * m2 + j] * gate[r * h + j];
    }
  return make_result("glu", {n, h}, std::move(out), {x}, [n, h, m2, gate = std::move(gate)](Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    const double* xd = pdata(self, 0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < h; ++j) {
        const double go = self.grad[r * h + j];
        const double s = gate[r * h + j];
        g[r * m2 + j] += go * s;
        g[r * m2 + h + j] += go * xd[r * m2 + j] * s * (1.0 - s);
      }
  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& c, double eps) {
  require_matrix("cosine_similarity", a);
  require_matrix("cosine_similarity", c);
  if (a.cols() != c.cols()) shape_error("cosine_similarity", a, c);
  const std::size_t n = a.rows(), k = c.rows(), d = a.cols();
  std::vector<double> na(n), nc(k), out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t q = 0; q < d; ++q) s += a[i * d + q] * a[i * d + q];
    na[i] = std::sqrt(s);
  }
  for (std::size_t j = 0; j < k; ++j) {
    double s = 0.0;
    for (std::size_t q = 0; q < d; ++q) s += c[j * d + q] * c[j * d + q];
    nc[j] = std::sqrt(s);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double dot = 0.0;
      for (std::size_t q = 0; q < d; ++q) dot += a[i * d + q] * c[j * d + q];
      out[i * k + j] = dot / std::max(na[i] * nc[j], eps);
    }
  return make_result("cosine_similarity", {n, k}, std::move(out), {a, c},
                     [n, k, d, eps, na = std::move(na), nc = std::move(nc)](Node& self) {
                       const double* ad = pdata(self, 0);
                       const double* cd = pdata(self, 1);
                       double* ga = pgrad(self, 0);
                       double* gc = pgrad(self, 1);
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < k; ++j) {
                           const double go = self.grad[i * k + j];
                           if (go == 0.0) continue;
                           const double prod = na[i] * nc[j];
                           const double s = self.data[i * k + j];
                           if (prod > eps) {
                             for (std::size_t q = 0; q < d; ++q) {
                               if (ga) ga[i * d + q] += go * (cd[j * d + q] / prod - s * ad[i * d + q] / (na[i] * na[i]));
                               if (gc) gc[j * d + q] += go * (ad[i * d + q] / prod - s * cd[j * d + q] / (nc[j] * nc[j]));
                             }
                           } else {
                             for (std::size_t q = 0; q < d; ++q) {
                               if (ga) ga[i * d + q] += go * cd[j * d + q] / eps;
                               if (gc) gc[j * d + q] += go * ad[i * d + q] / eps;
                             }
                           }
                         }
                     });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result("sum", {}, {s}, {x}, [](Node& self) {
    if (double* g = pgrad(self, 0)) {
      const std::size_t n = self.parents[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) shape_error("mean", "empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_same("mse", a, b);
  return mean(square(sub(a, b)));
}

Tensor masked_mse(const Tensor& a, const Tensor& b, Mask mask) {
  require_same("masked_mse", a, b);
  require_mask("masked_mse", mask, a.size());
  std::vector<std::uint8_t> mk(mask.begin(), mask.end());
  std::size_t count = 0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!valid(mk, i)) continue;
    const double d = a[i] - b[i];
    s += d * d;
    ++count;
  }
  const double denom = count ? static_cast<double>(count) : 1.0;
  return make_result("masked_mse", {}, {s / denom}, {a, b}, [mk = std::move(mk), denom](Node& self) {
    const double* ad = pdata(self, 0);
    const double* bd = pdata(self, 1);
    double* ga = pgrad(self, 0);
    double* gb = pgrad(self, 1);
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (!valid(mk, i)) continue;
      const double g = self.grad[0] * 2.0 * (ad[i] - bd[i]) / denom;
      if (ga) ga[i] += g;
      if (gb) gb[i] -= g;
    }
  });
}

Tensor sum_rows(const Tensor& x) {
  const auto [n, m] = row_shape("sum_rows", x);
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < m; ++j) out[r] += x[r * m + j];
  return make_result("sum_rows", {n}, std::move(out), {x}, [n, m](Node& self) {
    if (double* g = pgrad(self, 0))
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < m; ++j) g[r * m + j] += self.grad[r];
  });
}

Tensor mean_over_rows(const Tensor& x) {
  const auto [n, m] = row_shape("mean_over_rows", x);
  if (n == 0) shape_error("mean_over_rows", "no rows");
  std::vector<double> out(m, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < m; ++j) out[j] += x[r * m + j];
  for (auto& v : out) v /= static_cast<double>(n);
  return make_result("mean_over_rows", {m}, std::move(out), {x}, [n, m](Node& self) {
    if (double* g = pgrad(self, 0))
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < m; ++j) g[r * m + j] += self.grad[j] / static_cast<double>(n);
  });
}

Tensor normalize_sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  if (!(s > 0.0)) shape_error("normalize_sum", "sum must be positive");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / s;
  return make_result("normalize_sum", x.shape(), std::move(out), {x}, [s](Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    double dot = 0.0;
    for (std::size_t i = 0; i < self.data.size(); ++i) dot += self.grad[i] * self.data[i];
    for (std::size_t i = 0; i < self.data.size(); ++i) g[i] += (self.grad[i] - dot) / s;
  });
}

Tensor entropy_rows(const Tensor& p) {
  const auto [n, m] = row_shape("entropy_rows", p);
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < m; ++j) {
      const double v = p[r * m + j];
      if (v > 0.0) out[r] -= v * std::log(v);
    }
  return make_result("entropy_rows", {n}, std::move(out), {p}, [n, m](Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    const double* pd = pdata(self, 0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < m; ++j) {
        const double v = pd[r * m + j];
        if (v > 0.0) g[r * m + j] -= self.grad[r] * (std::log(v) + 1.0);
      }
  });
}

Tensor mean_pool(const Tensor& x, Mask row_mask, std::size_t group) {
  require_matrix("mean_pool", x);
  const std::size_t rows = x.rows(), d = x.cols();
  if (group == 0 || rows % group != 0) {
    shape_error("mean_pool", "rows " + std::to_string(rows) + " not divisible by group " + std::to_string(group));
  }
  require_mask("mean_pool", row_mask, rows);
  const std::size_t batch = rows / group;
  std::vector<std::uint8_t> mk(row_mask.begin(), row_mask.end());
  std::vector<double> counts(batch, 0.0), out(batch * d, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < group; ++p) {
      const std::size_t r = b * group + p;
      if (!valid(mk, r)) continue;
      counts[b] += 1.0;
      for (std::size_t j = 0; j < d; ++j) out[b * d + j] += x[r * d + j];
    }
    if (counts[b] > 0.0)
      for (std::size_t j = 0; j < d; ++j) out[b * d + j] /= counts[b];
  }
  return make_result("mean_pool", {batch, d}, std::move(out), {x},
                     [batch, group, d, mk = std::move(mk), counts = std::move(counts)](Node& self) {
                       double* g = pgrad(self, 0);
                       if (!g) return;
                       for (std::size_t b = 0; b < batch; ++b) {
                         if (counts[b] == 0.0) continue;
                         for (std::size_t p = 0; p < group; ++p) {
                           const std::size_t r = b * group + p;
                           if (!valid(mk, r)) continue;
                           for (std::size_t j = 0; j < d; ++j) g[r * d + j] += self.grad[b * d + j] / counts[b];
                         }
                       }
                     });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  require_matrix("gather_rows", x);
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<double> out(idx.size() * d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n) shape_error("gather_rows", "row " + std::to_string(idx[i]) + " of " + shape_str(x.shape()));
    std::copy_n(&x.data()[idx[i] * d], d, &out[i * d]);
  }
  const std::size_t count = idx.size();  // idx is moved into the closure below
  return make_result("gather_rows", {count, d}, std::move(out), {x}, [d, idx = std::move(idx)](Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) g[idx[i] * d + j] += self.grad[i * d + j];
  });
}

Tensor scatter_rows(const Tensor& x, std::span<const std::size_t> index, std::size_t rows) {
  require_matrix("scatter_rows", x);
  const std::size_t d = x.cols();
  if (index.size() != x.rows()) shape_error("scatter_rows", "index has " + std::to_string(index.size()) + " entries for " + shape_str(x.shape()));
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<double> out(rows * d, 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) shape_error("scatter_rows", "target row " + std::to_string(idx[i]) + " >= " + std::to_string(rows));
    for (std::size_t j = 0; j < d; ++j) out[idx[i] * d + j] += x[i * d + j];
  }
  return make_result("scatter_rows", {rows, d}, std::move(out), {x}, [d, idx = std::move(idx)](Node& self) {
    double* g = pgrad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += self.grad[idx[i] * d + j];
  });
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, Mask q_mask, Mask k_mask,
                            std::size_t heads, std::size_t q_group, std::size_t k_group, const Tensor& bias_scale,
                            std::span<const double> structure) {
  require_matrix("multi_head_attention", q);
  require_matrix("multi_head_attention", k);
  require_same("multi_head_attention", k, v);
  if (q.cols() != k.cols()) shape_error("multi_head_attention", q, k);
  const std::size_t d = q.cols();
  if (heads == 0 || d % heads != 0) shape_error("multi_head_attention", "model dim not divisible by heads");
  if (q_group == 0 || k_group == 0 || q.rows() % q_group != 0 || k.rows() % k_group != 0 ||
      q.rows() / q_group != k.rows() / k_group) {
    shape_error("multi_head_attention", q, k);
  }
  require_mask("multi_head_attention", q_mask, q.rows());
  require_mask("multi_head_attention", k_mask, k.rows());
  const std::size_t batch = q.rows() / q_group, dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<std::uint8_t> qm(q_mask.begin(), q_mask.end()), km(k_mask.begin(), k_mask.end());
  const bool biased = bias_scale.defined();
  if (biased) {
    if (bias_scale.size() != heads) shape_error("multi_head_attention", bias_scale, Tensor::zeros({heads}));
    if (structure.size() != q.rows() * k_group) {
      shape_error("multi_head_attention", "structure needs " + std::to_string(q.rows() * k_group) + " entries");
    }
  }
  std::vector<double> st = biased ? std::vector<double>(structure.begin(), structure.end()) : std::vector<double>{};

  // weights[(row * heads + h) * k_group + j]
  std::vector<double> weights(q.rows() * heads * k_group, 0.0);
  std::vector<double> out(q.rows() * d, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    bool any_key = false;
    for (std::size_t j = 0; j < k_group; ++j) any_key = any_key || valid(km, b * k_group + j);
    for (std::size_t p = 0; p < q_group; ++p) {
      const std::size_t row = b * q_group + p;
      if (!valid(qm, row)) continue;
      if (!any_key) shape_error("multi_head_attention", "sample " + std::to_string(b) + " has no valid keys");
      for (std::size_t h = 0; h < heads; ++h) {
        double* w = &weights[(row * heads + h) * k_group];
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k_group; ++j) {
          const std::size_t kr = b * k_group + j;
          if (!valid(km, kr)) continue;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += q[row * d + h * dh + c] * k[kr * d + h * dh + c];
          w[j] = s * inv_sqrt;
          if (biased) w[j] += bias_scale[h] * st[row * k_group + j];
          mx = std::max(mx, w[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < k_group; ++j) {
          if (!valid(km, b * k_group + j)) continue;
          w[j] = std::exp(w[j] - mx);
          z += w[j];
        }
        for (std::size_t j = 0; j < k_group; ++j) {
          const std::size_t kr = b * k_group + j;
          if (!valid(km, kr)) continue;
          w[j] /= z;
          for (std::size_t c = 0; c < dh; ++c) out[row * d + h * dh + c] += w[j] * v[kr * d + h * dh + c];
        }
      }
    }
  }
  std::vector<Tensor> parents{q, k, v};
  if (biased) parents.push_back(bias_scale);
  return make_result(
      "multi_head_attention", {q.rows(), d}, std::move(out), std::move(parents),
      [batch, q_group, k_group, heads, dh, d, inv_sqrt, biased, qm = std::move(qm), km = std::move(km),
       st = std::move(st), weights = std::move(weights)](Node& self) {
        const double* qd = pdata(self, 0);
        const double* kd = pdata(self, 1);
        const double* vd = pdata(self, 2);
        double* gq = pgrad(self, 0);
        double* gk = pgrad(self, 1);
        double* gv = pgrad(self, 2);
        double* gs = biased ? pgrad(self, 3) : nullptr;
        std::vector<double> dw(k_group);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t p = 0; p < q_group; ++p) {
            const std::size_t row = b * q_group + p;
            if (!valid(qm, row)) continue;
            for (std::size_t h = 0; h < heads; ++h) {
              const double* w = &weights[(row * heads + h) * k_group];
              const double* go = &self.grad[row * d + h * dh];
              double dot = 0.0;
              for (std::size_t j = 0; j < k_group; ++j) {
                const std::size_t kr = b * k_group + j;
                dw[j] = 0.0;
                if (!valid(km, kr)) continue;
                for (std::size_t c = 0; c < dh; ++c) dw[j] += go[c] * vd[kr * d + h * dh + c];
                dot += w[j] * dw[j];
                if (gv)
                  for (std::size_t c = 0; c < dh; ++c) gv[kr * d + h * dh + c] += w[j] * go[c];
              }
              for (std::size_t j = 0; j < k_group; ++j) {
                const std::size_t kr = b * k_group + j;
                if (!valid(km, kr)) continue;
                const double raw = w[j] * (dw[j] - dot);
                if (gs) gs[h] += raw * st[row * k_group + j];
                const double ds = raw * inv_sqrt;
                if (ds == 0.0) continue;
                for (std::size_t c = 0; c < dh; ++c) {
                  if (gq) gq[row * d + h * dh + c] += ds * kd[kr * d + h * dh + c];
                  if (gk) gk[kr * d + h * dh + c] += ds * qd[row * d + h * dh + c];
                }
              }
            }
          }
      });
}

}  // namespace cross::ad
