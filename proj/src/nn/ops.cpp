#include "asvkit/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "asvkit/error.hpp"

namespace asv::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

double* grad_of(detail::Node& self, std::size_t k) {
  auto& p = *self.parents[k];
  return p.requires_grad ? p.grad.data() : nullptr;
}

const std::vector<double>& data_of(detail::Node& self, std::size_t k) {
  return self.parents[k]->data;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(Errc::ShapeMismatch, std::string(op) + ": shapes " +
                                  to_string(a.shape()) + " and " +
                                  to_string(b.shape()) + " differ");
  }
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    fail(Errc::ShapeMismatch, std::string(op) + ": expected rank " +
                                  std::to_string(rank) + ", got " +
                                  to_string(x.shape()));
  }
}

template <typename Fn, typename Deriv>
Tensor unary(const Tensor& x, Fn fn, Deriv deriv_from_output) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(x[i]);
  return make_result(x.shape(), std::move(out), {x},
                     [deriv_from_output](detail::Node& self) {
                       double* g = grad_of(self, 0);
                       const auto& in = data_of(self, 0);
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         g[i] += self.grad[i] *
                                 deriv_from_output(in[i], self.data[i]);
                       }
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (double* g = grad_of(self, k)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    const auto& av = data_of(self, 0);
    const auto& bv = data_of(self, 1);
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (double* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1);
  if (b.rank() < 1 || b.rank() > 2 || b.dim(0) != k) {
    fail(Errc::ShapeMismatch, "matmul: cannot multiply " + to_string(a.shape()) +
                                  " by " + to_string(b.shape()));
  }
  const std::size_t n = b.rank() == 2 ? b.dim(1) : 1;
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() =
      ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
  Shape shape = b.rank() == 2 ? Shape{m, n} : Shape{m};
  return make_result(std::move(shape), std::move(out), {a, b},
                     [m, k, n](detail::Node& self) {
                       ConstMap dout(self.grad.data(), m, n);
                       if (double* g = grad_of(self, 0)) {
                         MutMap(g, m, k).noalias() +=
                             dout * ConstMap(data_of(self, 1).data(), k, n).transpose();
                       }
                       if (double* g = grad_of(self, 1)) {
                         MutMap(g, k, n).noalias() +=
                             ConstMap(data_of(self, 0).data(), m, k).transpose() * dout;
                       }
                     });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_row_bias");
  require_rank(bias, 1, "add_row_bias");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.dim(0) != n) fail(Errc::ShapeMismatch, "add_row_bias: width mismatch");
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bias[c];
  return make_result(x.shape(), std::move(out), {x, bias},
                     [m, n](detail::Node& self) {
                       if (double* g = grad_of(self, 0)) {
                         for (std::size_t i = 0; i < m * n; ++i) g[i] += self.grad[i];
                       }
                       if (double* g = grad_of(self, 1)) {
                         for (std::size_t r = 0; r < m; ++r)
                           for (std::size_t c = 0; c < n; ++c) g[c] += self.grad[r * n + c];
                       }
                     });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m * n);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[c * m + r] = x[r * n + c];
  return make_result({n, m}, std::move(out), {x}, [m, n](detail::Node& self) {
    double* g = grad_of(self, 0);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) g[r * n + c] += self.grad[c * m + r];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    fail(Errc::ShapeMismatch, "reshape: " + to_string(x.shape()) + " to " +
                                  to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, [](detail::Node& self) {
    double* g = grad_of(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail(Errc::ShapeMismatch, "concat: no inputs");
  std::vector<double> out;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    require_rank(p, 1, "concat");
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  const std::size_t n = out.size();
  return make_result({n}, std::move(out), parts,
                     [offsets](detail::Node& self) {
                       for (std::size_t k = 0; k < offsets.size(); ++k) {
                         double* g = grad_of(self, k);
                         if (!g) continue;
                         const std::size_t len = self.parents[k]->data.size();
                         for (std::size_t i = 0; i < len; ++i) {
                           g[i] += self.grad[offsets[k] + i];
                         }
                       }
                     });
}

Tensor concat_cols(const Tensor& left, const Tensor& right) {
  require_rank(left, 2, "concat_cols");
  require_rank(right, 2, "concat_cols");
  if (left.dim(0) != right.dim(0)) {
    fail(Errc::ShapeMismatch, "concat_cols: row counts differ");
  }
  const std::size_t t = left.dim(0), a = left.dim(1), b = right.dim(1);
  std::vector<double> out(t * (a + b));
  for (std::size_t r = 0; r < t; ++r) {
    std::copy_n(left.data().begin() + r * a, a, out.begin() + r * (a + b));
    std::copy_n(right.data().begin() + r * b, b, out.begin() + r * (a + b) + a);
  }
  return make_result({t, a + b}, std::move(out), {left, right},
                     [t, a, b](detail::Node& self) {
                       if (double* g = grad_of(self, 0)) {
                         for (std::size_t r = 0; r < t; ++r)
                           for (std::size_t c = 0; c < a; ++c)
                             g[r * a + c] += self.grad[r * (a + b) + c];
                       }
                       if (double* g = grad_of(self, 1)) {
                         for (std::size_t r = 0; r < t; ++r)
                           for (std::size_t c = 0; c < b; ++c)
                             g[r * b + c] += self.grad[r * (a + b) + a + c];
                       }
                     });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) fail(Errc::ShapeMismatch, "stack_rows: no inputs");
  const std::size_t n = rows.front().size();
  std::vector<double> out;
  out.reserve(rows.size() * n);
  for (const auto& r : rows) {
    require_rank(r, 1, "stack_rows");
    if (r.size() != n) fail(Errc::ShapeMismatch, "stack_rows: ragged rows");
    out.insert(out.end(), r.data().begin(), r.data().end());
  }
  return make_result({rows.size(), n}, std::move(out), rows,
                     [n](detail::Node& self) {
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         if (double* g = grad_of(self, k)) {
                           for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[k * n + i];
                         }
                       }
                     });
}

Tensor row(const Tensor& x, std::size_t i) {
  require_rank(x, 2, "row");
  const std::size_t n = x.dim(1);
  if (i >= x.dim(0)) fail(Errc::ShapeMismatch, "row: index out of range");
  std::vector<double> out(x.data().begin() + i * n, x.data().begin() + (i + 1) * n);
  return make_result({n}, std::move(out), {x}, [i, n](detail::Node& self) {
    double* g = grad_of(self, 0);
    for (std::size_t c = 0; c < n; ++c) g[i * n + c] += self.grad[c];
  });
}

Tensor slice(const Tensor& x, std::size_t start, std::size_t length) {
  require_rank(x, 1, "slice");
  if (start + length > x.size()) fail(Errc::ShapeMismatch, "slice: out of range");
  std::vector<double> out(x.data().begin() + start,
                          x.data().begin() + start + length);
  return make_result({length}, std::move(out), {x}, [start](detail::Node& self) {
    double* g = grad_of(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[start + i] += self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({}, {s}, {x}, [](detail::Node& self) {
    double* g = grad_of(self, 0);
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor sum_squares(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  return make_result({}, {s}, {x}, [](detail::Node& self) {
    double* g = grad_of(self, 0);
    const auto& in = data_of(self, 0);
    for (std::size_t i = 0; i < in.size(); ++i) g[i] += 2.0 * in[i] * self.grad[0];
  });
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 1, "softmax");
  const double peak = *std::max_element(logits.data().begin(), logits.data().end());
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return make_result(logits.shape(), std::move(out), {logits},
                     [](detail::Node& self) {
                       double* g = grad_of(self, 0);
                       double dot = 0.0;
                       for (std::size_t i = 0; i < self.data.size(); ++i)
                         dot += self.grad[i] * self.data[i];
                       for (std::size_t i = 0; i < self.data.size(); ++i)
                         g[i] += self.data[i] * (self.grad[i] - dot);
                     });
}

Tensor log_softmax(const Tensor& logits) {
  require_rank(logits, 1, "log_softmax");
  const double peak = *std::max_element(logits.data().begin(), logits.data().end());
  double z = 0.0;
  for (double v : logits.data()) z += std::exp(v - peak);
  const double log_z = peak + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits[i] - log_z;
  return make_result(logits.shape(), std::move(out), {logits},
                     [](detail::Node& self) {
                       double* g = grad_of(self, 0);
                       double total = 0.0;
                       for (double v : self.grad) total += v;
                       for (std::size_t i = 0; i < self.data.size(); ++i)
                         g[i] += self.grad[i] - std::exp(self.data[i]) * total;
                     });
}

Tensor cross_entropy(const Tensor& logits, std::size_t target) {
  require_rank(logits, 1, "cross_entropy");
  if (target >= logits.size()) {
    fail(Errc::InvalidArgument, "cross_entropy: target " +
                                    std::to_string(target) + " out of range");
  }
  const double peak = *std::max_element(logits.data().begin(), logits.data().end());
  double z = 0.0;
  for (double v : logits.data()) z += std::exp(v - peak);
  const double loss = peak + std::log(z) - logits[target];
  return make_result({}, {loss}, {logits}, [target, peak, z](detail::Node& self) {
    double* g = grad_of(self, 0);
    const auto& in = data_of(self, 0);
    for (std::size_t i = 0; i < in.size(); ++i) {
      const double p = std::exp(in[i] - peak) / z;
      g[i] += self.grad[0] * (p - (i == target ? 1.0 : 0.0));
    }
  });
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    fail(Errc::InvalidArgument, "dropout rate must be in [0, 1)");
  }
  if (!training || rate == 0.0) return x;
  const double keep = 1.0 - rate;
  std::vector<double> mask(x.size());
  for (double& m : mask) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  return make_result(x.shape(), std::move(out), {x},
                     [mask = std::move(mask)](detail::Node& self) {
                       double* g = grad_of(self, 0);
                       for (std::size_t i = 0; i < mask.size(); ++i)
                         g[i] += self.grad[i] * mask[i];
                     });
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
  require_rank(input, 3, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  require_rank(bias, 1, "conv2d bias");
  const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t c_out = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != c_in || bias.dim(0) != c_out) {
    fail(Errc::ShapeMismatch, "conv2d: weight " + to_string(weight.shape()) +
                                  " incompatible with input " +
                                  to_string(input.shape()));
  }
  if (stride == 0) fail(Errc::InvalidArgument, "conv2d: stride must be >= 1");
  if (h + 2 * padding < kh || w + 2 * padding < kw) {
    fail(Errc::ShapeMismatch, "conv2d: kernel larger than padded input");
  }
  const std::size_t oh = (h + 2 * padding - kh) / stride + 1;
  const std::size_t ow = (w + 2 * padding - kw) / stride + 1;
  const std::size_t patch = c_in * kh * kw;
  const std::size_t n_out = oh * ow;

  // im2col: [patch x n_out]
  std::vector<double> cols(patch * n_out, 0.0);
  const auto& x = input.data();
  for (std::size_t c = 0; c < c_in; ++c)
    for (std::size_t ky = 0; ky < kh; ++ky)
      for (std::size_t kx = 0; kx < kw; ++kx) {
        double* dst = cols.data() + ((c * kh + ky) * kw + kx) * n_out;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                          static_cast<std::ptrdiff_t>(padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                            static_cast<std::ptrdiff_t>(padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            dst[oy * ow + ox] = x[(c * h + iy) * w + ix];
          }
        }
      }

  std::vector<double> out(c_out * n_out);
  MutMap o(out.data(), c_out, n_out);
  o.noalias() = ConstMap(weight.data().data(), c_out, patch) *
                ConstMap(cols.data(), patch, n_out);
  for (std::size_t oc = 0; oc < c_out; ++oc) o.row(oc).array() += bias[oc];

  return make_result(
      {c_out, oh, ow}, std::move(out), {input, weight, bias},
      [cols = std::move(cols), c_in, h, w, c_out, kh, kw, oh, ow, patch, n_out,
       stride, padding](detail::Node& self) {
        ConstMap dout(self.grad.data(), c_out, n_out);
        if (double* g = grad_of(self, 1)) {
          MutMap(g, c_out, patch).noalias() +=
              dout * ConstMap(cols.data(), patch, n_out).transpose();
        }
        if (double* g = grad_of(self, 2)) {
          for (std::size_t oc = 0; oc < c_out; ++oc) g[oc] += dout.row(oc).sum();
        }
        if (double* g = grad_of(self, 0)) {
          RowMat dcols = ConstMap(data_of(self, 1).data(), c_out, patch).transpose() * dout;
          for (std::size_t c = 0; c < c_in; ++c)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const double* src = dcols.data() + ((c * kh + ky) * kw + kx) * n_out;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                  const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                  static_cast<std::ptrdiff_t>(padding);
                  if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                  for (std::size_t ox = 0; ox < ow; ++ox) {
                    const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                    static_cast<std::ptrdiff_t>(padding);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                    g[(c * h + iy) * w + ix] += src[oy * ow + ox];
                  }
                }
              }
        }
      });
}

Tensor maxpool2d(const Tensor& input, std::size_t kernel, std::size_t stride) {
  require_rank(input, 3, "maxpool2d");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (kernel == 0 || stride == 0 || kernel > h || kernel > w) {
    fail(Errc::ShapeMismatch, "maxpool2d: bad kernel for " + to_string(input.shape()));
  }
  const std::size_t oh = (h - kernel) / stride + 1;
  const std::size_t ow = (w - kernel) / stride + 1;
  std::vector<double> out(c * oh * ow);
  std::vector<std::size_t> arg(out.size());
  const auto& x = input.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::size_t i = (ch * h + oy * stride + ky) * w + ox * stride + kx;
            if (x[i] > best) {
              best = x[i];
              best_i = i;
            }
          }
        const std::size_t o = (ch * oh + oy) * ow + ox;
        out[o] = best;
        arg[o] = best_i;
      }
  return make_result({c, oh, ow}, std::move(out), {input},
                     [arg = std::move(arg)](detail::Node& self) {
                       double* g = grad_of(self, 0);
                       for (std::size_t o = 0; o < arg.size(); ++o) g[arg[o]] += self.grad[o];
                     });
}

Tensor global_avg_pool(const Tensor& input) {
  require_rank(input, 3, "global_avg_pool");
  const std::size_t c = input.dim(0), area = input.dim(1) * input.dim(2);
  std::vector<double> out(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < area; ++i) s += input[ch * area + i];
    out[ch] = s / static_cast<double>(area);
  }
  return make_result({c}, std::move(out), {input}, [c, area](detail::Node& self) {
    double* g = grad_of(self, 0);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < area; ++i)
        g[ch * area + i] += self.grad[ch] / static_cast<double>(area);
  });
}

}  // namespace asv::nn
