#include <cmath>
#include <limits>
#include <string>

#include "doctest.h"
#include "odm/error.hpp"
#include "odm/quantization.hpp"
#include "oracles.hpp"

using namespace odm;
using namespace odm::testing;

namespace {

struct WarningCapture {
  std::vector<std::string> seen;
  WarningHandler previous;
  WarningCapture() {
    previous = set_warning_handler([this](const std::string& m) { seen.push_back(m); });
  }
  ~WarningCapture() { set_warning_handler(previous); }
};

/// Brute force nearest grid point, ties toward the point farther from alpha_l
/// in index space when the offset is positive (half away from zero).
double nearest_grid(double x, double lo, double hi, int bits) {
  const double s = (hi - lo) / (std::pow(2.0, bits) - 1.0);
  const double c = std::clamp(x, lo, hi);
  const int levels = 1 << bits;
  double best = lo;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < levels; ++k) {
    const double g = lo + k * s;
    const double d = std::fabs(g - c);
    if (d < best_d - 1e-12 || (std::fabs(d - best_d) <= 1e-12 && g > best)) {
      best = g;
      best_d = d;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("step_size examples") {
  CHECK(step_size({0.0f, 255.0f, 8}) == doctest::Approx(1.0));
  CHECK(step_size({-1.0f, 1.0f, 2}) == doctest::Approx(2.0 / 3.0));
  CHECK(step_size({0.0f, 1.0f, 1}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(step_size({1.0f, 1.0f, 2}), RangeCollapseError);
  CHECK_THROWS_AS(step_size({1.0f, 0.0f, 2}), RangeCollapseError);
  CHECK_THROWS_AS(step_size({0.0f, 1.0f, 0}), ConfigError);
}

TEST_CASE("fake_quantize examples") {
  const QuantParams p{-1.0f, 1.0f, 2};
  CHECK(fake_quantize_value(5.0f, p) == 1.0f);
  CHECK(fake_quantize_value(-1.0f, p) == -1.0f);
  CHECK(fake_quantize_value(0.4f, p) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
  Tensor bad({1, 1, 1, 2}, std::vector<float>{0.0f, std::numeric_limits<float>::quiet_NaN()});
  CHECK_THROWS_AS(fake_quantize(bad, p), ContractViolation);
}

TEST_CASE("round half away from zero") {
  CHECK(round_half_away(0.5) == 1.0);
  CHECK(round_half_away(1.5) == 2.0);
  CHECK(round_half_away(2.5) == 3.0);
  CHECK(round_half_away(-0.5) == -1.0);
  CHECK(round_half_away(2.4999) == 2.0);
}

TEST_CASE("ste_backward contract cases") {
  const QuantParams learn{-1.0f, 1.0f, 2, true};
  SUBCASE("pass-through") {
    const Tensor x({1, 1, 1, 3}, std::vector<float>{-0.5f, 0.0f, 0.9f});
    const Tensor g({1, 1, 1, 3}, std::vector<float>{0.3f, -2.0f, 5.0f});
    const SteGrads r = ste_backward(g, x, learn);
    CHECK(r.grad_x == g);
    CHECK(r.grad_alpha_l == 0.0f);
    CHECK(r.grad_alpha_u == 0.0f);
  }
  SUBCASE("full saturation") {
    const Tensor x({1, 1, 1, 3}, std::vector<float>{1.5f, 2.0f, 9.0f});
    const Tensor g({1, 1, 1, 3}, std::vector<float>{1.0f, 2.0f, 4.0f});
    const SteGrads r = ste_backward(g, x, learn);
    for (float v : r.grad_x.values()) CHECK(v == 0.0f);
    CHECK(r.grad_alpha_u == 7.0f);
    CHECK(r.grad_alpha_l == 0.0f);
  }
  SUBCASE("mixed") {
    const Tensor x({1, 1, 1, 3}, std::vector<float>{-2.0f, 0.0f, 2.0f});
    const Tensor g({1, 1, 1, 3}, 1.0f);
    const SteGrads r = ste_backward(g, x, learn);
    CHECK(r.grad_x.storage() == std::vector<float>{0.0f, 1.0f, 0.0f});
    CHECK(r.grad_alpha_l == 1.0f);
    CHECK(r.grad_alpha_u == 1.0f);
    const SteGrads fixed = ste_backward(g, x, {-1.0f, 1.0f, 2, false});
    CHECK(fixed.grad_alpha_l == 0.0f);
    CHECK(fixed.grad_alpha_u == 0.0f);
  }
  SUBCASE("bounds are inclusive") {
    const Tensor x({1, 1, 1, 2}, std::vector<float>{-1.0f, 1.0f});
    const Tensor g({1, 1, 1, 2}, 1.0f);
    const SteGrads r = ste_backward(g, x, learn);
    CHECK(r.grad_x == g);
  }
}

TEST_CASE("learnable-range quantizer routes gradients through the tape") {
  Tape tape;
  Var x = tape.leaf(Tensor({1, 1, 1, 3}, std::vector<float>{-2.0f, 0.0f, 2.0f}));
  Var range = tape.leaf(Tensor({1, 2, 1, 1}, std::vector<float>{-1.0f, 1.0f}));
  Var y = fake_quantize(x, range, 2);
  CHECK(y.value().storage() == std::vector<float>{-1.0f, y.value()[1], 1.0f});
  tape.backward(weighted_sum(y, Tensor({1, 1, 1, 3}, std::vector<float>{1.0f, 2.0f, 3.0f})));
  CHECK(tape.grad(x).storage() == std::vector<float>{0.0f, 2.0f, 0.0f});
  CHECK(tape.grad(range).storage() == std::vector<float>{1.0f, 3.0f});
}

TEST_CASE("percentile_init examples") {
  std::vector<float> ramp(101);
  for (int i = 0; i <= 100; ++i) ramp[static_cast<std::size_t>(i)] = static_cast<float>(i);
  const Tensor t({1, 1, 1, 101}, ramp);
  auto [lo, hi] = percentile_init(std::span<const Tensor>(&t, 1), 1.0);
  CHECK(lo == doctest::Approx(1.0));
  CHECK(hi == doctest::Approx(99.0));

  WarningCapture cap;
  const Tensor c({1, 1, 2, 2}, 3.0f);
  auto [clo, chi] = percentile_init(std::span<const Tensor>(&c, 1), 1.0);
  CHECK(clo == doctest::Approx(3.0 - 3e-4));
  CHECK(chi == doctest::Approx(3.0 + 3e-4));
  CHECK(cap.seen.size() == 1);

  // per-batch percentiles (1, 9) and (3, 11)
  std::vector<float> a(101);
  std::vector<float> b(101);
  for (int i = 0; i <= 100; ++i) {
    a[static_cast<std::size_t>(i)] = static_cast<float>(1.0 + 8.0 * (i - 1) / 98.0);
    b[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i)] + 2.0f;
  }
  const std::vector<Tensor> batches{Tensor({1, 1, 1, 101}, a), Tensor({1, 1, 1, 101}, b)};
  auto [alo, ahi] = percentile_init(batches, 1.0);
  CHECK(alo == doctest::Approx(2.0).epsilon(1e-5));
  CHECK(ahi == doctest::Approx(10.0).epsilon(1e-5));

  CHECK_THROWS(percentile_init(std::span<const Tensor>(), 1.0));
  CHECK_THROWS(percentile_init(batches, 50.0));
  CHECK_THROWS(percentile_init(batches, 0.0));
}

TEST_CASE("percentile matches linear interpolation of order statistics") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>(rng.uniform(-10, 10));
    const double q = rng.uniform(0.0, 100.0);
    std::vector<double> sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end());
    const double pos = q / 100.0 * static_cast<double>(n - 1);
    const auto k = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(k);
    const double want = k + 1 < n ? sorted[k] + frac * (sorted[k + 1] - sorted[k]) : sorted[k];
    CHECK(percentile(v, q) == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("quantize_weights examples") {
  SUBCASE("uniform kernel over [-1, 1]") {
    std::vector<float> w(101);
    for (int i = 0; i <= 100; ++i) w[static_cast<std::size_t>(i)] = -1.0f + 0.02f * static_cast<float>(i);
    const QuantParams r = weight_range(w, 2);
    CHECK(r.alpha_l == doctest::Approx(-0.98).epsilon(1e-4));
    CHECK(r.alpha_u == doctest::Approx(0.98).epsilon(1e-4));
    Tape tape;
    Var q = quantize_weights(tape.constant(Tensor({1, 1, 1, 101}, w)), 2);
    const double s = step_size(r);
    for (float v : q.value().storage()) {
      const double k = (v - r.alpha_l) / s;
      CHECK(std::fabs(k - std::round(k)) < 1e-4);
    }
  }
  SUBCASE("all-zero kernel") {
    WarningCapture cap;
    Tape tape;
    Var q = quantize_weights(tape.constant(Tensor({2, 2, 3, 3}, 0.0f)), 2);
    for (float v : q.value().storage()) CHECK(v == 0.0f);
  }
  SUBCASE("8-bit error bound") {
    Rng rng(23);
    const Tensor w = random_tensor({4, 4, 3, 3}, rng);
    const QuantParams r = weight_range(w.values(), 8);
    Tape tape;
    Var q = quantize_weights(tape.constant(w), 8);
    const double s = step_size(r);
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (w[i] < r.alpha_l || w[i] > r.alpha_u) continue;
      CHECK(std::fabs(q.value()[i] - w[i]) <= s / 2 + 1e-6);
    }
  }
  SUBCASE("in-range weights get a pass-through gradient") {
    Rng rng(29);
    const Tensor w = random_tensor({2, 2, 3, 3}, rng);
    const QuantParams r = weight_range(w.values(), 2);
    Tape tape;
    Var wv = tape.leaf(w);
    tape.backward(mean(quantize_weights(wv, 2)));
    const Tensor g = tape.grad(wv);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const bool inside = w[i] >= r.alpha_l && w[i] <= r.alpha_u;
      CHECK(g[i] == doctest::Approx(inside ? 1.0 / static_cast<double>(w.size()) : 0.0));
    }
  }
}

TEST_CASE("range gap guard") {
  std::vector<float> r{0.5f, 0.5f};
  enforce_range_gap(r);
  CHECK(r[1] >= r[0] + kMinRangeGap);
  std::vector<float> crossed{1.0f, 0.0f};
  enforce_range_gap(crossed);
  CHECK(crossed[0] == 1.0f);
  CHECK(crossed[1] >= 1.0f + kMinRangeGap);
  std::vector<float> fine{-1.0f, 1.0f};
  enforce_range_gap(fine);
  CHECK(fine[1] == 1.0f);
}

TEST_CASE("fuzz: grid membership, error bound, idempotence, monotonicity") {
  Rng rng(2024);
  const int bit_choices[] = {2, 3, 4, 8};
  int failures = 0;
  for (int trial = 0; trial < 100000; ++trial) {
    const int bits = bit_choices[rng.below(4)];
    const float lo = static_cast<float>(rng.uniform(-5, 5));
    const float hi = lo + static_cast<float>(rng.uniform(0.01, 10));
    const QuantParams p{lo, hi, bits};
    const double s = step_size(p);
    const float x = static_cast<float>(rng.uniform(lo - 3, hi + 3));
    const float y = static_cast<float>(rng.uniform(lo - 3, hi + 3));
    const float qx = fake_quantize_value(x, p);
    const double k = (static_cast<double>(qx) - lo) / s;
    const bool on_grid = std::fabs(k - std::round(k)) * s <= 1e-6 + 1e-6 * std::fabs(hi) && k > -1e-6 &&
                         k < std::pow(2.0, bits) - 1 + 1e-6;
    const bool bounded = std::fabs(qx - std::clamp(x, lo, hi)) <= s / 2 + 1e-6;
    const bool idem = fake_quantize_value(qx, p) == qx;
    const float qy = fake_quantize_value(y, p);
    const bool mono = x <= y ? qx <= qy : qy <= qx;
    if (!(on_grid && bounded && idem && mono)) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("exhaustive nearest-grid oracle for 2 and 3 bits") {
  for (int bits : {2, 3}) {
    const double lo = -1.25;
    const double hi = 2.0;
    const QuantParams p{static_cast<float>(lo), static_cast<float>(hi), bits};
    int mismatches = 0;
    for (int i = 0; i < 10000; ++i) {
      const double x = -2.0 + 5.0 * i / 9999.0;
      const double want = nearest_grid(static_cast<float>(x), p.alpha_l, p.alpha_u, bits);
      if (std::fabs(fake_quantize_value(static_cast<float>(x), p) - want) > 1e-6) ++mismatches;
    }
    CHECK(mismatches == 0);
  }
}
