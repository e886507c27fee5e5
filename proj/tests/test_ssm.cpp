#include <doctest.h>

#include <cmath>
#include <numbers>

#include "poselift/ops.hpp"
#include "poselift/ssm.hpp"
#include "scan_oracle.hpp"
#include "support.hpp"

using namespace poselift;
using namespace testing;

TEST_CASE("zero-order hold") {
  auto s = discretize(-1.0, 1.0, 1e-12);
  CHECK(s.a_bar == doctest::Approx(1.0));
  CHECK(std::abs(s.b_bar) < 1e-11);

  s = discretize(0.0, 2.0, 0.3);
  CHECK(s.a_bar == 1.0);
  CHECK(s.b_bar == doctest::Approx(0.6).epsilon(1e-15));

  // A = -1, delta = ln 2, B = 1: the divided difference (abar - 1) / (delta A)
  // is 0.72135 and multiplies delta B = ln 2, giving bbar = 0.5.
  s = discretize(-1.0, 1.0, std::numbers::ln2);
  CHECK(s.a_bar == doctest::Approx(0.5).epsilon(1e-15));
  const double factor = (s.a_bar - 1.0) / (-std::numbers::ln2);
  CHECK(factor == doctest::Approx(0.72135).epsilon(1e-5));
  CHECK(s.b_bar == doctest::Approx(factor * std::numbers::ln2).epsilon(1e-14));
  CHECK(s.b_bar == doctest::Approx(0.5).epsilon(1e-14));

  // Below the small-step threshold the analytic limit delta B is used.
  s = discretize(-1e-9, 3.0, 1.0);
  CHECK(s.b_bar == 3.0);

  CHECK_THROWS_AS(discretize(-1.0, 1.0, 0.0), ContractViolation);
  CHECK_THROWS_AS(discretize(-1.0, 1.0, -0.5), ContractViolation);
}

TEST_CASE("selective scan examples") {
  // Single step from the zero state.
  Instance one{1, 1, 3, {2.0}, {0.4}, {-0.5, -1.0, -2.0}, {0.3, -0.2, 0.7}, {1.0, 2.0, -1.0}};
  double expect = 0.0;
  for (std::size_t s = 0; s < 3; ++s) expect += one.c[s] * discretize(one.a[s], one.b[s], 0.4).b_bar * 2.0;
  CHECK(run_plain(one)[0] == doctest::Approx(expect).epsilon(1e-14));
  CHECK(run_ad(one)[0] == doctest::Approx(expect).epsilon(1e-14));

  // abar underflows to zero: the scan is memoryless.
  std::mt19937_64 rng(2);
  auto in = random_instance(rng, 6, 2, 2);
  for (auto& a : in.a) a = -1e6;
  for (auto& d : in.delta) d = 1.0;
  const auto y = run_plain(in);
  for (std::size_t k = 0; k < 6; ++k)
    for (std::size_t ch = 0; ch < 2; ++ch) {
      double m = 0.0;
      for (std::size_t s = 0; s < 2; ++s) m += in.c[k * 2 + s] * (1.0 / 1e6) * in.b[k * 2 + s] * in.x[k * 2 + ch];
      CHECK(y[k * 2 + ch] == doctest::Approx(m).epsilon(1e-9));
    }

  std::vector<double> bad = in.x;
  bad[3] = std::nan("");
  CHECK_THROWS_AS(selective_scan(bad, in.delta, in.a, in.b, in.c, 6, 2, 2), ContractViolation);
  CHECK_THROWS_AS(ad::selective_scan(ad::Tensor({1, 6, 2}, bad), ad::Tensor({1, 6, 2}, in.delta),
                                     ad::Tensor({2, 2}, std::vector<double>(4, 0.0)), ad::Tensor({1, 6, 2}, in.b),
                                     ad::Tensor({1, 6, 2}, in.c)),
                  ContractViolation);
}

TEST_CASE("selective scan matches the unrolled sum") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<std::size_t> L(1, 32), E(1, 8), N(1, 8);
  double worst_plain = 0.0, worst_ad = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const auto in = random_instance(rng, L(rng), E(rng), N(rng));
    const auto oracle = unrolled(in);
    worst_plain = std::max(worst_plain, relative_error(run_plain(in), oracle));
    worst_ad = std::max(worst_ad, relative_error(run_ad(in), oracle));
  }
  CHECK(worst_plain < 1e-6);
  CHECK(worst_ad < 1e-6);
}

TEST_CASE("scan and convolution are causal") {
  std::mt19937_64 rng(5);
  long violations = 0;
  for (int rep = 0; rep < 50; ++rep) {
    auto in = random_instance(rng, 12, 3, 4);
    const auto base = run_plain(in);
    const auto base_ad = run_ad(in);
    const std::vector<double> kernel = testing::normal_values(3 * 4, rng), bias = testing::normal_values(3, rng);
    const auto conv = causal_conv1d(in.x, kernel, bias, 12, 3, 4);
    const std::size_t t = static_cast<std::size_t>(rep % 12);
    in.x[t * 3 + 1] += 0.5;
    const auto moved = run_plain(in);
    const auto moved_ad = run_ad(in);
    const auto conv2 = causal_conv1d(in.x, kernel, bias, 12, 3, 4);
    for (std::size_t i = 0; i < t * 3; ++i) {
      violations += moved[i] != base[i];
      violations += moved_ad[i] != base_ad[i];
      violations += conv2[i] != conv[i];
    }
    // The perturbed position itself does respond.
    CHECK(moved[t * 3 + 1] != base[t * 3 + 1]);
  }
  CHECK(violations == 0);

  // The learned selection path (delta, B, C from the input) is causal too.
  SelectiveSsm ssm(4, 3, 1, rng);
  auto u = testing::random_tensor({1, 10, 4}, rng);
  const auto y0 = ssm.forward(u).values();
  u.mutable_data()[6 * 4 + 2] += 1.0;
  const auto y1 = ssm.forward(u).values();
  for (std::size_t i = 0; i < 6 * 4; ++i) CHECK(y0[i] == y1[i]);
  CHECK(testing::max_abs_diff(std::span(y0).subspan(24), std::span(y1).subspan(24)) > 0.0);
}

TEST_CASE("scan state stays bounded for constant parameters") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ux(-1.0, 1.0);
  for (double a : {-0.05, -0.5, -3.0}) {
    const std::size_t l = 400;
    Instance in{l, 1, 1, {}, std::vector<double>(l, 0.2), {a}, std::vector<double>(l, 1.5), std::vector<double>(l, 1.0)};
    for (std::size_t i = 0; i < l; ++i) in.x.push_back(ux(rng));
    const auto step = discretize(a, 1.5, 0.2);
    const double bound = std::abs(step.b_bar) * 1.0 / (1.0 - step.a_bar);
    for (double h : run_plain(in)) CHECK(std::abs(h) <= bound + 1e-12);
  }
}

TEST_CASE("causal convolution") {
  const std::vector<double> x{1, 2, 3};
  CHECK(causal_conv1d(x, std::vector<double>{1, 1}, std::vector<double>{0}, 3, 1, 2) == std::vector<double>{1, 3, 5});
  CHECK(causal_conv1d(x, std::vector<double>{0, 0, 1}, std::vector<double>{0}, 3, 1, 3) == x);
  CHECK(causal_conv1d(x, std::vector<double>{2}, std::vector<double>{1}, 3, 1, 1) == std::vector<double>{3, 5, 7});
  CHECK_THROWS_AS(causal_conv1d(x, std::vector<double>{1, 1}, std::vector<double>{0}, 3, 2, 2), ContractViolation);

  // Differentiable version agrees with the plain one, per channel.
  std::mt19937_64 rng(1);
  const auto xs = testing::normal_values(2 * 7 * 3, rng);
  const auto kern = testing::normal_values(3 * 4, rng), bias = testing::normal_values(3, rng);
  const auto y = ad::causal_conv1d(ad::Tensor({2, 7, 3}, xs), ad::Tensor({3, 4}, kern), ad::Tensor({3}, bias)).values();
  for (std::size_t b = 0; b < 2; ++b) {
    const auto plain = causal_conv1d(std::span(xs).subspan(b * 21, 21), kern, bias, 7, 3, 4);
    CHECK(testing::max_abs_diff(std::span(y).subspan(b * 21, 21), plain) < 1e-14);
  }
}

TEST_CASE("sequence flip") {
  const ad::Tensor x({1, 3, 2}, {1, 2, 3, 4, 5, 6});
  CHECK(ad::flip_sequence(x).values() == std::vector<double>{5, 6, 3, 4, 1, 2});
  std::mt19937_64 rng(3);
  const auto r = testing::random_tensor({2, 5, 3}, rng);
  CHECK(ad::flip_sequence(ad::flip_sequence(r)).values() == r.values());
  const ad::Tensor pal({1, 3, 1}, {7, 8, 7});
  CHECK(ad::flip_sequence(pal).values() == pal.values());
}

TEST_CASE("scan gradients match finite differences") {
  std::mt19937_64 rng(17);
  SelectiveSsm ssm(4, 3, 2, rng);
  auto u = testing::random_tensor({2, 6, 4}, rng, 1.0, true);
  ParamSet ps;
  ssm.collect("ssm", ps);
  ps.add("u", u);
  const auto errs = testing::gradient_check(ps, [&] { return testing::probe_loss(ssm.forward(u), 99); }, 1000, 1);
  for (const auto& e : errs) {
    INFO(e.name);
    CHECK(e.relative < 1e-4);
    CHECK(e.analytic_norm > 0.0);
  }

  // Raw op with tiny |delta A| so the series branches are exercised.
  for (double alog_level : {0.5, -12.0}) {
    std::uniform_real_distribution<double> dt(0.005, 0.8);
    auto x = testing::random_tensor({2, 5, 3}, rng, 1.0, true);
    std::vector<double> dv(30);
    for (auto& v : dv) v = dt(rng);
    auto delta = ad::Tensor({2, 5, 3}, dv, true);
    auto alog = ad::Tensor({3, 2}, std::vector<double>(6, alog_level), true);
    auto b = testing::random_tensor({2, 5, 2}, rng, 1.0, true);
    auto c = testing::random_tensor({2, 5, 2}, rng, 1.0, true);
    ParamSet raw;
    raw.add("x", x);
    raw.add("delta", delta);
    raw.add("a_log", alog);
    raw.add("B", b);
    raw.add("C", c);
    const auto e2 = testing::gradient_check(
        raw, [&] { return testing::probe_loss(ad::selective_scan(x, delta, alog, b, c), 5); }, 1000, 2);
    for (const auto& e : e2) {
      INFO(e.name << " at a_log " << alog_level);
      CHECK(e.relative < 1e-4);
    }
  }

  // Convolution gradients.
  CausalConv1d conv(3, 4, rng);
  auto xc = testing::random_tensor({2, 6, 3}, rng, 1.0, true);
  ParamSet pc;
  conv.collect("conv", pc);
  pc.add("x", xc);
  CHECK(testing::worst(testing::gradient_check(pc, [&] { return testing::probe_loss(conv.forward(xc), 3); }, 1000, 3)) <
        1e-6);
}
