#include "poselift/ssm.hpp"

#include <Eigen/Core>
#include <cmath>

#include "poselift/error.hpp"
#include "poselift/ops.hpp"

namespace poselift {

namespace {

constexpr double kSmallStep = 1e-8;

// (e^x - 1) / x
double phi1(double x) { return std::abs(x) < kSmallStep ? 1.0 : std::expm1(x) / x; }

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw NonFiniteValue(std::string(what) + " contains a non-finite value");
}

}  // namespace

DiscretizedStep discretize(double a, double b, double delta) {
  require(delta > 0.0, "discretize: step size must be positive, got " + std::to_string(delta));
  const double x = delta * a;
  return {std::exp(x), phi1(x) * delta * b};
}

std::vector<double> selective_scan(std::span<const double> x, std::span<const double> delta,
                                   std::span<const double> a, std::span<const double> b,
                                   std::span<const double> c, std::size_t length,
                                   std::size_t channels, std::size_t state) {
  require(x.size() == length * channels && delta.size() == length * channels &&
              a.size() == channels * state && b.size() == length * state &&
              c.size() == length * state,
          "selective_scan: inconsistent shapes");
  check_finite(x, "selective_scan input");
  std::vector<double> h(channels * state, 0.0);
  std::vector<double> y(length * channels, 0.0);
  for (std::size_t t = 0; t < length; ++t)
    for (std::size_t ch = 0; ch < channels; ++ch) {
      double acc = 0.0;
      for (std::size_t n = 0; n < state; ++n) {
        const auto step = discretize(a[ch * state + n], b[t * state + n], delta[t * channels + ch]);
        double& hv = h[ch * state + n];
        hv = step.a_bar * hv + step.b_bar * x[t * channels + ch];
        acc += c[t * state + n] * hv;
      }
      y[t * channels + ch] = acc;
    }
  return y;
}

std::vector<double> causal_conv1d(std::span<const double> x, std::span<const double> kernel,
                                  std::span<const double> bias, std::size_t length,
                                  std::size_t channels, std::size_t k) {
  require(k >= 1, "causal_conv1d: kernel size must be at least 1");
  require(x.size() == length * channels && kernel.size() == channels * k && bias.size() == channels,
          "causal_conv1d: inconsistent shapes");
  std::vector<double> y(length * channels);
  for (std::size_t t = 0; t < length; ++t)
    for (std::size_t ch = 0; ch < channels; ++ch) {
      double acc = bias[ch];
      for (std::size_t i = 0; i < k; ++i) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + i) - static_cast<std::ptrdiff_t>(k - 1);
        if (src >= 0) acc += kernel[ch * k + i] * x[static_cast<std::size_t>(src) * channels + ch];
      }
      y[t * channels + ch] = acc;
    }
  return y;
}

namespace ad {

namespace {

// Zero-order-hold terms for every x = delta * A of a sequence at once:
// a_bar = e^x and phi1(x) = (e^x - 1) / x.
void zoh_terms(const double* x, double* a_bar, double* p1, std::size_t n) {
  Eigen::Map<const Eigen::ArrayXd> xv(x, static_cast<Eigen::Index>(n));
  Eigen::Map<Eigen::ArrayXd>(a_bar, static_cast<Eigen::Index>(n)) = xv.exp();
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i];
    // Below 1e-3 the divided difference loses digits; the cubic series is
    // exact to ~1e-14 there.
    p1[i] = std::abs(xi) < 1e-3 ? 1.0 + xi * (0.5 + xi * (1.0 / 6.0 + xi / 24.0)) : (a_bar[i] - 1.0) / xi;
  }
}

struct ScanShape {
  std::size_t length, channels, state;
};

// Runs one sequence; fills y and, when given, per-step states. a_bars and
// phis are (length x channels x state) scratch, left holding the ZOH terms.
void scan_sequence(const ScanShape& sh, const double* u, const double* delta, const double* a, const double* b,
                   const double* c, double* y, double* states, double* a_bars, double* phis) {
  const std::size_t block = sh.channels * sh.state;
  std::vector<double> h(block, 0.0);
  for (std::size_t t = 0; t < sh.length; ++t)
    for (std::size_t ch = 0; ch < sh.channels; ++ch) {
      const double dt = delta[t * sh.channels + ch];
      double* xr = a_bars + t * block + ch * sh.state;
      for (std::size_t n = 0; n < sh.state; ++n) xr[n] = dt * a[ch * sh.state + n];
    }
  // x is staged in a_bars; phis is computed before a_bars is overwritten.
  {
    const std::size_t total = sh.length * block;
    std::vector<double> x(a_bars, a_bars + total);
    zoh_terms(x.data(), a_bars, phis, total);
  }
  for (std::size_t t = 0; t < sh.length; ++t) {
    const double* bt = b + t * sh.state;
    const double* ct = c + t * sh.state;
    for (std::size_t ch = 0; ch < sh.channels; ++ch) {
      const double dt = delta[t * sh.channels + ch];
      const double xin = u[t * sh.channels + ch];
      const double* abr = a_bars + t * block + ch * sh.state;
      const double* pr = phis + t * block + ch * sh.state;
      double* hr = h.data() + ch * sh.state;
      double acc = 0.0;
      for (std::size_t n = 0; n < sh.state; ++n) {
        hr[n] = abr[n] * hr[n] + pr[n] * dt * bt[n] * xin;
        acc += ct[n] * hr[n];
      }
      y[t * sh.channels + ch] = acc;
    }
    if (states) std::copy(h.begin(), h.end(), states + t * block);
  }
}

}  // namespace

Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& a_log, const Tensor& b,
                      const Tensor& c) {
  require(u.rank() == 3 && delta.shape() == u.shape(),
          "selective_scan: u and delta must share a (B, l, e) shape");
  const std::size_t batch = u.dim(0), length = u.dim(1), channels = u.dim(2);
  require(a_log.rank() == 2 && a_log.dim(0) == channels, "selective_scan: a_log must be (e, N)");
  const std::size_t state = a_log.dim(1);
  require(b.shape() == Shape({batch, length, state}) && c.shape() == b.shape(),
          "selective_scan: B and C must be (B, l, N)");
  check_finite(u.data(), "selective_scan input");

  std::vector<double> a(channels * state);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = -std::exp(a_log.values()[i]);
  const ScanShape sh{length, channels, state};
  std::vector<double> y(batch * length * channels, 0.0);
  std::vector<double> a_bars(length * channels * state), phis(a_bars.size());
  for (std::size_t bi = 0; bi < batch; ++bi)
    scan_sequence(sh, u.data().data() + bi * length * channels, delta.data().data() + bi * length * channels,
                  a.data(), b.data().data() + bi * length * state, c.data().data() + bi * length * state,
                  y.data() + bi * length * channels, nullptr, a_bars.data(), phis.data());
  flops::add(10ull * batch * length * channels * state);

  // States are not kept: the backward pass re-scans one sequence at a time,
  // so memory stays O(l e N) whatever the batch.
  return make_op(
      u.shape(), std::move(y), {u, delta, a_log, b, c}, [batch, sh, a = std::move(a)](Node& out) {
        auto& nu = *out.inputs[0];
        auto& nd = *out.inputs[1];
        auto& na = *out.inputs[2];
        auto& nb = *out.inputs[3];
        auto& nc = *out.inputs[4];
        const std::size_t length = sh.length, channels = sh.channels, state = sh.state;
        const std::size_t block = channels * state;
        std::vector<double> du(nu.value.size(), 0.0), dd(nd.value.size(), 0.0);
        std::vector<double> da(block, 0.0), db(nb.value.size(), 0.0), dc(nc.value.size(), 0.0);
        std::vector<double> dh(block), states(length * block), a_bars(length * block), phis(length * block);
        std::vector<double> y_scratch(length * channels);
        const auto& gy = out.grad;
        for (std::size_t bi = 0; bi < batch; ++bi) {
          const std::size_t off = bi * length;
          scan_sequence(sh, nu.value.data() + off * channels, nd.value.data() + off * channels, a.data(),
                        nb.value.data() + off * state, nc.value.data() + off * state, y_scratch.data(),
                        states.data(), a_bars.data(), phis.data());
          std::fill(dh.begin(), dh.end(), 0.0);
          for (std::size_t tt = length; tt-- > 0;) {
            const std::size_t row = off + tt;
            const double* h_t = states.data() + tt * block;
            const double* h_prev = tt > 0 ? states.data() + (tt - 1) * block : nullptr;
            const double* ab_t = a_bars.data() + tt * block;
            const double* p1_t = phis.data() + tt * block;
            const double* bt = nb.value.data() + row * state;
            const double* ct = nc.value.data() + row * state;
            double* dbt = db.data() + row * state;
            double* dct = dc.data() + row * state;
            for (std::size_t ch = 0; ch < channels; ++ch) {
              const double g = gy[row * channels + ch];
              const double dt = nd.value[row * channels + ch];
              const double xin = nu.value[row * channels + ch];
              double du_acc = 0.0, dd_acc = 0.0;
              for (std::size_t n = 0; n < state; ++n) {
                const std::size_t s = ch * state + n;
                dh[s] += g * ct[n];
                dct[n] += g * h_t[s];
                const double an = a[s];
                const double x = dt * an;
                const double a_bar = ab_t[s];
                const double p1 = p1_t[s];
                const double p2 = std::abs(x) < 1e-4 ? 0.5 + x / 3.0 + x * x / 8.0 : (a_bar - p1) / x;
                const double hp = h_prev ? h_prev[s] : 0.0;
                const double g_abar = dh[s] * hp;
                const double g_bbar = dh[s] * xin;
                du_acc += dh[s] * p1 * dt * bt[n];
                dd_acc += g_abar * a_bar * an + g_bbar * bt[n] * a_bar;
                da[s] += g_abar * a_bar * dt + g_bbar * bt[n] * dt * dt * p2;
                dbt[n] += g_bbar * dt * p1;
                dh[s] *= a_bar;
              }
              du[row * channels + ch] += du_acc;
              dd[row * channels + ch] += dd_acc;
            }
          }
        }
        auto accumulate = [](Node& node, const std::vector<double>& g) {
          if (!node.requires_grad) return;
          auto& dst = node.grad_buffer();
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
        };
        accumulate(nu, du);
        accumulate(nd, dd);
        accumulate(nb, db);
        accumulate(nc, dc);
        if (na.requires_grad) {
          auto& dst = na.grad_buffer();
          for (std::size_t i = 0; i < block; ++i) dst[i] += da[i] * a[i];  // dA/dA_log = A
        }
      });
}

Tensor causal_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  require(x.rank() == 3, "causal_conv1d expects (B, l, e), got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), length = x.dim(1), channels = x.dim(2);
  require(kernel.rank() == 2 && kernel.dim(0) == channels && bias.size() == channels,
          "causal_conv1d: kernel must be (e, k) and bias (e)");
  const std::size_t k = kernel.dim(1);
  std::vector<double> y;
  y.reserve(x.size());
  for (std::size_t bi = 0; bi < batch; ++bi) {
    auto part = poselift::causal_conv1d(x.data().subspan(bi * length * channels, length * channels),
                                        kernel.data(), bias.data(), length, channels, k);
    y.insert(y.end(), part.begin(), part.end());
  }
  flops::add(2ull * x.size() * k);
  return make_op(x.shape(), std::move(y), {x, kernel, bias}, [batch, length, channels, k](Node& out) {
    auto& nx = *out.inputs[0];
    auto& nk = *out.inputs[1];
    auto& nb = *out.inputs[2];
    const auto& gy = out.grad;
    std::vector<double>* gx = nx.requires_grad ? &nx.grad_buffer() : nullptr;
    std::vector<double>* gk = nk.requires_grad ? &nk.grad_buffer() : nullptr;
    std::vector<double>* gb = nb.requires_grad ? &nb.grad_buffer() : nullptr;
    for (std::size_t bi = 0; bi < batch; ++bi)
      for (std::size_t t = 0; t < length; ++t)
        for (std::size_t ch = 0; ch < channels; ++ch) {
          const double g = gy[(bi * length + t) * channels + ch];
          if (gb) (*gb)[ch] += g;
          for (std::size_t i = 0; i < k; ++i) {
            const std::ptrdiff_t src =
                static_cast<std::ptrdiff_t>(t + i) - static_cast<std::ptrdiff_t>(k - 1);
            if (src < 0) continue;
            const std::size_t xi = (bi * length + static_cast<std::size_t>(src)) * channels + ch;
            if (gx) (*gx)[xi] += g * nk.value[ch * k + i];
            if (gk) (*gk)[ch * k + i] += g * nx.value[xi];
          }
        }
  });
}

Tensor flip_sequence(const Tensor& x) {
  require(x.rank() == 3, "flip_sequence expects (B, l, C), got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), length = x.dim(1), width = x.dim(2);
  const auto& xv = x.values();
  std::vector<double> y(xv.size());
  for (std::size_t bi = 0; bi < batch; ++bi)
    for (std::size_t t = 0; t < length; ++t)
      std::copy_n(xv.data() + (bi * length + t) * width, width,
                  y.data() + (bi * length + (length - 1 - t)) * width);
  return make_op(x.shape(), std::move(y), {x}, [batch, length, width](Node& out) {
    auto& nx = *out.inputs[0];
    if (!nx.requires_grad) return;
    auto& gx = nx.grad_buffer();
    for (std::size_t bi = 0; bi < batch; ++bi)
      for (std::size_t t = 0; t < length; ++t)
        for (std::size_t c = 0; c < width; ++c)
          gx[(bi * length + t) * width + c] += out.grad[(bi * length + (length - 1 - t)) * width + c];
  });
}

}  // namespace ad

CausalConv1d::CausalConv1d(std::size_t channels, std::size_t k, std::mt19937_64& rng) {
  require(k >= 1, "causal conv kernel size must be at least 1");
  const double bound = 1.0 / std::sqrt(static_cast<double>(k));
  kernel = uniform_param({channels, k}, bound, rng);
  bias = uniform_param({channels}, bound, rng);
}

void CausalConv1d::collect(const std::string& prefix, ParamSet& out) {
  out.add(prefix + ".kernel", kernel);
  out.add(prefix + ".bias", bias);
}

SelectiveSsm::SelectiveSsm(std::size_t channels, std::size_t state, std::size_t dt_rank,
                           std::mt19937_64& rng) {
  require(channels > 0 && state > 0 && dt_rank > 0, "SSM dimensions must be positive");
  std::vector<double> alog(channels * state);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t n = 0; n < state; ++n) alog[c * state + n] = std::log(static_cast<double>(n + 1));
  a_log = ad::Tensor({channels, state}, std::move(alog), true);

  const double in_bound = 1.0 / std::sqrt(static_cast<double>(channels));
  dt_down = uniform_param({channels, dt_rank}, in_bound, rng);
  dt_up = uniform_param({dt_rank, channels}, 1.0 / std::sqrt(static_cast<double>(dt_rank)), rng);
  // Initial step sizes log-uniform in [1e-3, 1e-1] through the softplus inverse.
  std::uniform_real_distribution<double> u(std::log(1e-3), std::log(1e-1));
  std::vector<double> bias(channels);
  for (auto& v : bias) {
    const double dt = std::exp(u(rng));
    v = dt + std::log(-std::expm1(-dt));
  }
  dt_bias = ad::Tensor({channels}, std::move(bias), true);
  w_b = uniform_param({channels, state}, in_bound, rng);
  w_c = uniform_param({channels, state}, in_bound, rng);
}

ad::Tensor SelectiveSsm::delta(const ad::Tensor& u) const {
  return ad::softplus(ad::add(ad::matmul(ad::matmul(u, dt_down), dt_up), dt_bias));
}

ad::Tensor SelectiveSsm::forward(const ad::Tensor& u) const {
  return ad::selective_scan(u, delta(u), a_log, ad::matmul(u, w_b), ad::matmul(u, w_c));
}

void SelectiveSsm::collect(const std::string& prefix, ParamSet& out) {
  out.add(prefix + ".A_log", a_log);
  out.add(prefix + ".dt_down", dt_down);
  out.add(prefix + ".dt_up", dt_up);
  out.add(prefix + ".dt_bias", dt_bias);
  out.add(prefix + ".W_B", w_b);
  out.add(prefix + ".W_C", w_c);
}

}  // namespace poselift
