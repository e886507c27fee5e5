#include "poselift/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "poselift/error.hpp"

namespace poselift::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.rbegin(), tail.rend(), full.rbegin());
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv, std::uint64_t cost) {
  const auto& xv = x.values();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = fwd(xv[i]);
  flops::add(cost * xv.size());
  return make_op(x.shape(), std::move(y), {x}, [deriv](Node& out) {
    auto& in = *out.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * deriv(in.value[i], out.value[i]);
  });
}

double sigmoid_scalar(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require(is_suffix(a.shape(), b.shape()),
          "add: shape " + shape_str(b.shape()) + " does not broadcast onto " + shape_str(a.shape()));
  const auto& av = a.values();
  const auto& bv = b.values();
  const std::size_t inner = bv.size();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) y[i] = av[i] + bv[i % inner];
  flops::add(av.size());
  return make_op(a.shape(), std::move(y), {a, b}, [inner](Node& out) {
    auto& na = *out.inputs[0];
    auto& nb = *out.inputs[1];
    if (na.requires_grad) {
      auto& g = na.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.grad_buffer();
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i % inner] += out.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "mul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> y(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) y[i] = av[i] * bv[i];
  flops::add(av.size());
  return make_op(a.shape(), std::move(y), {a, b}, [](Node& out) {
    auto& na = *out.inputs[0];
    auto& nb = *out.inputs[1];
    if (na.requires_grad) {
      auto& g = na.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * nb.value[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * na.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; },
      1);
}

Tensor matmul(const Tensor& x, const Tensor& weight) {
  require(weight.rank() == 2, "matmul: weight must be rank 2, got " + shape_str(weight.shape()));
  require(x.rank() >= 1 && x.dim(-1) == weight.dim(0),
          "matmul: input " + shape_str(x.shape()) + " incompatible with weight " +
              shape_str(weight.shape()));
  const std::size_t in = weight.dim(0);
  const std::size_t out_dim = weight.dim(1);
  const std::size_t rows = x.size() / in;
  Shape shape = x.shape();
  shape.back() = out_dim;
  std::vector<double> y(rows * out_dim);
  MapM(y.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(out_dim)).noalias() =
      MapC(x.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(in)) *
      MapC(weight.data().data(), static_cast<Eigen::Index>(in),
           static_cast<Eigen::Index>(out_dim));
  flops::add(2ull * rows * in * out_dim);
  return make_op(std::move(shape), std::move(y), {x, weight}, [rows, in, out_dim](Node& out) {
    auto& nx = *out.inputs[0];
    auto& nw = *out.inputs[1];
    const auto r = static_cast<Eigen::Index>(rows);
    const auto i = static_cast<Eigen::Index>(in);
    const auto o = static_cast<Eigen::Index>(out_dim);
    MapC gy(out.grad.data(), r, o);
    if (nx.requires_grad) {
      MapM(nx.grad_buffer().data(), r, i).noalias() += gy * MapC(nw.value.data(), i, o).transpose();
    }
    if (nw.requires_grad) {
      MapM(nw.grad_buffer().data(), i, o).noalias() += MapC(nx.value.data(), r, i).transpose() * gy;
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  auto y = matmul(x, weight);
  return bias.defined() ? add(y, bias) : y;
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, sigmoid_scalar, [](double, double s) { return s * (1.0 - s); }, 4);
}

Tensor silu(const Tensor& x) {
  return unary(
      x, [](double v) { return v * sigmoid_scalar(v); },
      [](double v, double) {
        const double s = sigmoid_scalar(v);
        return s * (1.0 + v * (1.0 - s));
      },
      5);
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; }, 1);
}

Tensor gelu(const Tensor& x) {
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + v * pdf;
      },
      8);
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 20.0 ? v : std::log1p(std::exp(v)); },
      [](double v, double) { return sigmoid_scalar(v); }, 4);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t width = x.dim(-1);
  require(gamma.size() == width && beta.size() == width,
          "layer_norm: affine parameters do not match feature width " + std::to_string(width));
  const std::size_t rows = x.size() / width;
  const auto& xv = x.values();
  const auto& g = gamma.values();
  const auto& b = beta.values();
  std::vector<double> y(xv.size());
  std::vector<double> rstd(rows);
  std::vector<double> xhat(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * width;
    double mu = 0.0;
    for (std::size_t c = 0; c < width; ++c) mu += row[c];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t c = 0; c < width; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(width);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < width; ++c) {
      const double h = (row[c] - mu) * rstd[r];
      xhat[r * width + c] = h;
      y[r * width + c] = h * g[c] + b[c];
    }
  }
  flops::add(8ull * xv.size());
  return make_op(x.shape(), std::move(y), {x, gamma, beta},
                 [rows, width, rstd = std::move(rstd), xhat = std::move(xhat)](Node& out) {
                   auto& nx = *out.inputs[0];
                   auto& ng = *out.inputs[1];
                   auto& nb = *out.inputs[2];
                   const auto& gy = out.grad;
                   if (ng.requires_grad || nb.requires_grad) {
                     auto& gg = ng.grad_buffer();
                     auto& gb = nb.grad_buffer();
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t c = 0; c < width; ++c) {
                         gg[c] += gy[r * width + c] * xhat[r * width + c];
                         gb[c] += gy[r * width + c];
                       }
                   }
                   if (!nx.requires_grad) return;
                   auto& gx = nx.grad_buffer();
                   const double inv_w = 1.0 / static_cast<double>(width);
                   for (std::size_t r = 0; r < rows; ++r) {
                     double m1 = 0.0;
                     double m2 = 0.0;
                     for (std::size_t c = 0; c < width; ++c) {
                       const double gh = gy[r * width + c] * ng.value[c];
                       m1 += gh;
                       m2 += gh * xhat[r * width + c];
                     }
                     m1 *= inv_w;
                     m2 *= inv_w;
                     for (std::size_t c = 0; c < width; ++c) {
                       const double gh = gy[r * width + c] * ng.value[c];
                       gx[r * width + c] += rstd[r] * (gh - m1 - xhat[r * width + c] * m2);
                     }
                   }
                 });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                  bool training) {
  const std::size_t width = x.dim(-1);
  require(gamma.size() == width && beta.size() == width && stats.running_mean.size() == width &&
              stats.running_var.size() == width,
          "batch_norm: parameters do not match channel count " + std::to_string(width));
  const std::size_t rows = x.size() / width;
  const auto& xv = x.values();
  const auto& g = gamma.values();
  const auto& b = beta.values();
  std::vector<double> mu(width, 0.0);
  std::vector<double> var(width, 0.0);
  if (training) {
    require(rows > 1, "batch_norm: training mode needs more than one row per channel");
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < width; ++c) mu[c] += xv[r * width + c];
    for (auto& m : mu) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < width; ++c) {
        const double d = xv[r * width + c] - mu[c];
        var[c] += d * d;
      }
    for (std::size_t c = 0; c < width; ++c) {
      const double biased = var[c] / static_cast<double>(rows);
      const double unbiased = var[c] / static_cast<double>(rows - 1);
      var[c] = biased;
      stats.running_mean[c] = (1.0 - stats.momentum) * stats.running_mean[c] + stats.momentum * mu[c];
      stats.running_var[c] = (1.0 - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
    }
  } else {
    mu = stats.running_mean;
    var = stats.running_var;
  }
  std::vector<double> rstd(width);
  for (std::size_t c = 0; c < width; ++c) rstd[c] = 1.0 / std::sqrt(var[c] + stats.eps);
  std::vector<double> xhat(xv.size());
  std::vector<double> y(xv.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < width; ++c) {
      const double h = (xv[r * width + c] - mu[c]) * rstd[c];
      xhat[r * width + c] = h;
      y[r * width + c] = h * g[c] + b[c];
    }
  flops::add(6ull * xv.size());
  return make_op(
      x.shape(), std::move(y), {x, gamma, beta},
      [rows, width, training, rstd = std::move(rstd), xhat = std::move(xhat)](Node& out) {
        auto& nx = *out.inputs[0];
        auto& ng = *out.inputs[1];
        auto& nb = *out.inputs[2];
        const auto& gy = out.grad;
        if (ng.requires_grad || nb.requires_grad) {
          auto& gg = ng.grad_buffer();
          auto& gb = nb.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < width; ++c) {
              gg[c] += gy[r * width + c] * xhat[r * width + c];
              gb[c] += gy[r * width + c];
            }
        }
        if (!nx.requires_grad) return;
        auto& gx = nx.grad_buffer();
        if (!training) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < width; ++c)
              gx[r * width + c] += gy[r * width + c] * ng.value[c] * rstd[c];
          return;
        }
        std::vector<double> m1(width, 0.0);
        std::vector<double> m2(width, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < width; ++c) {
            const double gh = gy[r * width + c] * ng.value[c];
            m1[c] += gh;
            m2[c] += gh * xhat[r * width + c];
          }
        const double inv_n = 1.0 / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < width; ++c) {
            const double gh = gy[r * width + c] * ng.value[c];
            gx[r * width + c] += rstd[c] * (gh - m1[c] * inv_n - xhat[r * width + c] * m2[c] * inv_n);
          }
      });
}

Tensor softmax(const Tensor& x) {
  const std::size_t width = x.dim(-1);
  const std::size_t rows = x.size() / width;
  const auto& xv = x.values();
  std::vector<double> y(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * width;
    double* dst = y.data() + r * width;
    const double mx = *std::max_element(row, row + width);
    double total = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      dst[c] = std::exp(row[c] - mx);
      total += dst[c];
    }
    for (std::size_t c = 0; c < width; ++c) dst[c] /= total;
  }
  flops::add(4ull * xv.size());
  return make_op(x.shape(), std::move(y), {x}, [rows, width](Node& out) {
    auto& nx = *out.inputs[0];
    if (!nx.requires_grad) return;
    auto& gx = nx.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < width; ++c) dot += out.grad[r * width + c] * out.value[r * width + c];
      for (std::size_t c = 0; c < width; ++c)
        gx[r * width + c] += out.value[r * width + c] * (out.grad[r * width + c] - dot);
    }
  });
}

Tensor transpose12(const Tensor& x) {
  require(x.rank() == 4, "transpose12 expects a rank-4 tensor, got " + shape_str(x.shape()));
  const std::size_t a = x.dim(0), b = x.dim(1), c = x.dim(2), d = x.dim(3);
  const auto& xv = x.values();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t k = 0; k < c; ++k) {
        const double* src = xv.data() + ((i * b + j) * c + k) * d;
        double* dst = y.data() + ((i * c + k) * b + j) * d;
        std::copy(src, src + d, dst);
      }
  return make_op({a, c, b, d}, std::move(y), {x}, [a, b, c, d](Node& out) {
    auto& nx = *out.inputs[0];
    if (!nx.requires_grad) return;
    auto& gx = nx.grad_buffer();
    for (std::size_t i = 0; i < a; ++i)
      for (std::size_t j = 0; j < b; ++j)
        for (std::size_t k = 0; k < c; ++k) {
          const double* src = out.grad.data() + ((i * c + k) * b + j) * d;
          double* dst = gx.data() + ((i * b + j) * c + k) * d;
          for (std::size_t e = 0; e < d; ++e) dst[e] += src[e];
        }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(numel(shape) == x.size(),
          "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  return make_op(std::move(shape), x.values(), {x}, [](Node& out) {
    auto& nx = *out.inputs[0];
    if (!nx.requires_grad) return;
    auto& gx = nx.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += out.grad[i];
  });
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  Shape sa = a.shape();
  Shape sb = b.shape();
  require(sa.size() == sb.size() && std::equal(sa.begin(), sa.end() - 1, sb.begin()),
          "concat_last: leading shapes differ " + shape_str(sa) + " vs " + shape_str(sb));
  const std::size_t wa = sa.back(), wb = sb.back();
  const std::size_t rows = a.size() / wa;
  std::vector<double> y(rows * (wa + wb));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data().data() + r * wa, wa, y.data() + r * (wa + wb));
    std::copy_n(b.data().data() + r * wb, wb, y.data() + r * (wa + wb) + wa);
  }
  Shape shape = sa;
  shape.back() = wa + wb;
  return make_op(std::move(shape), std::move(y), {a, b}, [rows, wa, wb](Node& out) {
    auto& na = *out.inputs[0];
    auto& nb = *out.inputs[1];
    if (na.requires_grad) {
      auto& g = na.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < wa; ++c) g[r * wa + c] += out.grad[r * (wa + wb) + c];
    }
    if (nb.requires_grad) {
      auto& g = nb.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < wb; ++c) g[r * wb + c] += out.grad[r * (wa + wb) + wa + c];
    }
  });
}

Tensor mix2(const Tensor& alpha, const Tensor& s, const Tensor& t) {
  require(s.shape() == t.shape(), "mix2: branch shapes differ");
  require(alpha.dim(-1) == 2 && alpha.size() / 2 == s.size() / s.dim(-1),
          "mix2: weights " + shape_str(alpha.shape()) + " do not match " + shape_str(s.shape()));
  const std::size_t width = s.dim(-1);
  const std::size_t rows = s.size() / width;
  const auto& av = alpha.values();
  const auto& sv = s.values();
  const auto& tv = t.values();
  std::vector<double> y(sv.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < width; ++c)
      y[r * width + c] = av[2 * r] * sv[r * width + c] + av[2 * r + 1] * tv[r * width + c];
  flops::add(3ull * sv.size());
  return make_op(s.shape(), std::move(y), {alpha, s, t}, [rows, width](Node& out) {
    auto& na = *out.inputs[0];
    auto& ns = *out.inputs[1];
    auto& nt = *out.inputs[2];
    const auto& gy = out.grad;
    if (na.requires_grad) {
      auto& g = na.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < width; ++c) {
          g[2 * r] += gy[r * width + c] * ns.value[r * width + c];
          g[2 * r + 1] += gy[r * width + c] * nt.value[r * width + c];
        }
    }
    if (ns.requires_grad) {
      auto& g = ns.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < width; ++c) g[r * width + c] += gy[r * width + c] * na.value[2 * r];
    }
    if (nt.requires_grad) {
      auto& g = nt.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < width; ++c)
          g[r * width + c] += gy[r * width + c] * na.value[2 * r + 1];
    }
  });
}

Tensor graph_mix(const Tensor& x, std::span<const double> adjacency) {
  require(x.rank() == 3, "graph_mix expects (batch, joints, channels), got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), joints = x.dim(1), width = x.dim(2);
  require(adjacency.size() == joints * joints,
          "graph_mix: sequence length " + std::to_string(joints) +
              " does not match the adjacency size");
  std::vector<double> adj(adjacency.begin(), adjacency.end());
  const auto& xv = x.values();
  std::vector<double> y(xv.size(), 0.0);
  const auto J = static_cast<Eigen::Index>(joints);
  const auto W = static_cast<Eigen::Index>(width);
  for (std::size_t b = 0; b < batch; ++b) {
    MapM(y.data() + b * joints * width, J, W).noalias() =
        MapC(adj.data(), J, J) * MapC(xv.data() + b * joints * width, J, W);
  }
  flops::add(2ull * batch * joints * joints * width);
  return make_op(x.shape(), std::move(y), {x}, [batch, J, W, adj = std::move(adj)](Node& out) {
    auto& nx = *out.inputs[0];
    if (!nx.requires_grad) return;
    auto& gx = nx.grad_buffer();
    const auto block = static_cast<std::size_t>(J * W);
    for (std::size_t b = 0; b < batch; ++b) {
      MapM(gx.data() + b * block, J, W).noalias() +=
          MapC(adj.data(), J, J).transpose() * MapC(out.grad.data() + b * block, J, W);
    }
  });
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng) {
  require(p >= 0.0 && p < 1.0, "dropout probability must lie in [0, 1)");
  if (p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const double factor = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = keep(rng) ? factor : 0.0;
  const auto& xv = x.values();
  std::vector<double> y(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] * mask[i];
  return make_op(x.shape(), std::move(y), {x}, [mask = std::move(mask)](Node& out) {
    auto& nx = *out.inputs[0];
    if (!nx.requires_grad) return;
    auto& gx = nx.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += out.grad[i] * mask[i];
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_op({}, {total}, {x}, [](Node& out) {
    auto& nx = *out.inputs[0];
    if (!nx.requires_grad) return;
    auto& gx = nx.grad_buffer();
    for (auto& g : gx) g += out.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  require(x.size() > 0, "mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const std::size_t width = logits.dim(-1);
  const std::size_t rows = logits.size() / width;
  require(labels.size() == rows, "cross_entropy: " + std::to_string(labels.size()) +
                                     " labels for " + std::to_string(rows) + " rows");
  const auto& lv = logits.values();
  std::vector<double> probs(lv.size());
  std::vector<int> targets(labels.begin(), labels.end());
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    require(targets[r] >= 0 && static_cast<std::size_t>(targets[r]) < width,
            "cross_entropy: label out of range");
    const double* row = lv.data() + r * width;
    const double mx = *std::max_element(row, row + width);
    double total = 0.0;
    for (std::size_t c = 0; c < width; ++c) total += std::exp(row[c] - mx);
    const double log_z = mx + std::log(total);
    for (std::size_t c = 0; c < width; ++c) probs[r * width + c] = std::exp(row[c] - log_z);
    loss -= row[targets[r]] - log_z;
  }
  loss /= static_cast<double>(rows);
  return make_op({}, {loss}, {logits},
                 [rows, width, probs = std::move(probs), targets = std::move(targets)](Node& out) {
                   auto& nl = *out.inputs[0];
                   if (!nl.requires_grad) return;
                   auto& g = nl.grad_buffer();
                   const double s = out.grad[0] / static_cast<double>(rows);
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t c = 0; c < width; ++c) {
                       const double indicator = static_cast<int>(c) == targets[r] ? 1.0 : 0.0;
                       g[r * width + c] += s * (probs[r * width + c] - indicator);
                     }
                 });
}

}  // namespace poselift::ad
