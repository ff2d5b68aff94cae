#include "odm/quantization.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "odm/error.hpp"

namespace odm {

double step_size(const QuantParams& p) {
  if (p.bits < 1 || p.bits > 30) throw ConfigError("bit-width must be in [1, 30], got " + std::to_string(p.bits));
  if (!(p.alpha_u > p.alpha_l)) {
    std::ostringstream os;
    os << "quantization range collapsed: alpha_l=" << p.alpha_l << " alpha_u=" << p.alpha_u;
    throw RangeCollapseError(os.str());
  }
  const double levels = std::ldexp(1.0, p.bits) - 1.0;
  return (static_cast<double>(p.alpha_u) - static_cast<double>(p.alpha_l)) / levels;
}

double round_half_away(double v) { return std::round(v); }

namespace {

// Precomputed form of one quantizer so tensor loops avoid re-validating.
struct Grid {
  double lo, hi, step, top;

  explicit Grid(const QuantParams& p)
      : lo(p.alpha_l), hi(p.alpha_u), step(step_size(p)), top(std::ldexp(1.0, p.bits) - 1.0) {}

  float apply(float x) const {
    const double c = std::clamp(static_cast<double>(x), lo, hi);
    const double k = std::clamp(round_half_away((c - lo) / step), 0.0, top);
    return static_cast<float>(lo + k * step);
  }
};

}  // namespace

float fake_quantize_value(float x, const QuantParams& params) {
  if (!std::isfinite(x)) throw ContractViolation("fake_quantize: non-finite input");
  return Grid(params).apply(x);
}

Tensor fake_quantize(const Tensor& x, const QuantParams& params) {
  x.check_finite("fake_quantize input");
  const Grid grid(params);
  Tensor out = x;
  for (float& v : out.values()) v = grid.apply(v);
  return out;
}

SteGrads ste_backward(const Tensor& upstream, const Tensor& x, const QuantParams& params) {
  if (upstream.shape() != x.shape()) {
    throw DimensionError("ste_backward: gradient " + upstream.shape().str() + " vs input " + x.shape().str());
  }
  SteGrads out{Tensor(x.shape(), 0.0f), 0.0f, 0.0f};
  double lower = 0.0;
  double upper = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float v = x[i];
    if (v < params.alpha_l) {
      lower += upstream[i];
    } else if (v > params.alpha_u) {
      upper += upstream[i];
    } else {
      out.grad_x[i] = upstream[i];
    }
  }
  if (params.learnable) {
    out.grad_alpha_l = static_cast<float>(lower);
    out.grad_alpha_u = static_cast<float>(upper);
  }
  return out;
}

Var fake_quantize(const Var& x, const QuantParams& params) {
  Tensor out = fake_quantize(x.value(), params);
  QuantParams fixed = params;
  fixed.learnable = false;
  return x.tape().record(std::move(out), {x}, [x, fixed](const Tensor& g, InputGrads gin) {
    const SteGrads sg = ste_backward(g, x.value(), fixed);
    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += sg.grad_x[i];
  });
}

Var fake_quantize(const Var& x, const Var& range, int bits) {
  if (range.value().size() != 2) throw DimensionError("quantization range must hold 2 values, got " + range.shape().str());
  const QuantParams params{range.value()[0], range.value()[1], bits, true};
  Tensor out = fake_quantize(x.value(), params);
  return x.tape().record(std::move(out), {x, range}, [x, params](const Tensor& g, InputGrads gin) {
    const SteGrads sg = ste_backward(g, x.value(), params);
    if (gin[0] != nullptr) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += sg.grad_x[i];
    }
    if (gin[1] != nullptr) {
      (*gin[1])[0] += sg.grad_alpha_l;
      (*gin[1])[1] += sg.grad_alpha_u;
    }
  });
}

double percentile(std::vector<float> values, double q) {
  if (values.empty()) throw DimensionError("percentile of an empty set");
  if (q < 0.0 || q > 100.0) throw ConfigError("percentile must be in [0, 100]");
  std::sort(values.begin(), values.end());
  const double rank = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto below = static_cast<std::size_t>(std::floor(rank));
  const std::size_t above = std::min(below + 1, values.size() - 1);
  const double frac = rank - static_cast<double>(below);
  return values[below] + frac * (static_cast<double>(values[above]) - values[below]);
}

std::pair<float, float> widen_if_degenerate(float lo, float hi) {
  if (hi > lo) return {lo, hi};
  const float eps = 1e-4f * std::max(1.0f, std::fabs(hi));
  std::ostringstream os;
  os << "degenerate quantization range [" << lo << ", " << hi << "] widened by " << eps;
  warn(os.str());
  const float mid = 0.5f * (lo + hi);
  return {mid - eps, mid + eps};
}

namespace {

void check_percentile_arg(double j) {
  if (!(j > 0.0 && j < 50.0)) throw ConfigError("percentile j must lie in (0, 50)");
}

}  // namespace

std::pair<float, float> percentile_init(std::span<const Tensor> samples, double j) {
  check_percentile_arg(j);
  if (samples.empty()) throw UsageError("percentile_init needs at least one sample");
  double lo = 0.0;
  double hi = 0.0;
  for (const Tensor& s : samples) {
    s.check_finite("percentile_init sample");
    lo += percentile(s.storage(), j);
    hi += percentile(s.storage(), 100.0 - j);
  }
  const auto n = static_cast<double>(samples.size());
  return widen_if_degenerate(static_cast<float>(lo / n), static_cast<float>(hi / n));
}

QuantParams weight_range(std::span<const float> weights, int bits, double j) {
  check_percentile_arg(j);
  std::vector<float> v(weights.begin(), weights.end());
  if (v.empty()) throw DimensionError("weight quantization of an empty kernel");
  const auto lo = static_cast<float>(percentile(v, j));
  const auto hi = static_cast<float>(percentile(v, 100.0 - j));
  const auto [l, u] = widen_if_degenerate(lo, hi);
  return QuantParams{l, u, bits, false};
}

Var quantize_weights(const Var& w, int bits, double j) {
  const auto vals = w.value().values();
  const bool constant = std::adjacent_find(vals.begin(), vals.end(), std::not_equal_to<>()) == vals.end();
  const QuantParams params = weight_range(vals, bits, j);
  if (constant) {
    // A single-valued kernel sits exactly on a one-point grid.
    return mul_scalar(w, 1.0f);
  }
  return fake_quantize(w, params);
}

void enforce_range_gap(std::span<float> range) {
  if (range.size() != 2) throw DimensionError("quantization range must hold 2 values");
  range[1] = std::max(range[1], range[0] + kMinRangeGap);
}

}  // namespace odm
