#pragma once

#include <span>
#include <utility>
#include <vector>

#include "odm/tape.hpp"

namespace odm {

/// Clip bounds and bit-width of one fake quantizer.
struct QuantParams {
  float alpha_l = 0.0f;
  float alpha_u = 1.0f;
  int bits = 8;
  bool learnable = false;
};

/// Smallest gap enforced between alpha_l and alpha_u after an update.
inline constexpr float kMinRangeGap = 1e-4f;
/// Percentile used for range initialisation of activations and weights.
inline constexpr double kDefaultPercentile = 1.0;

/// (alpha_u - alpha_l) / (2^bits - 1). Throws RangeCollapseError if the
/// range is empty or inverted.
double step_size(const QuantParams& params);

/// Round half away from zero.
double round_half_away(double v);

/// Scalar form of the quantizer: Int((clip(x) - alpha_l) / s) * s + alpha_l.
float fake_quantize_value(float x, const QuantParams& params);

/// Elementwise fake quantization; non-finite input is a ContractViolation.
Tensor fake_quantize(const Tensor& x, const QuantParams& params);

struct SteGrads {
  Tensor grad_x;
  float grad_alpha_l = 0.0f;
  float grad_alpha_u = 0.0f;
};

/// Straight-through gradient: pass-through inside [alpha_l, alpha_u],
/// saturated mass routed to the bound it hit. Range gradients are zeroed
/// for non-learnable params.
SteGrads ste_backward(const Tensor& upstream, const Tensor& x, const QuantParams& params);

/// Fake quantization with a fixed range; only x receives a gradient.
Var fake_quantize(const Var& x, const QuantParams& params);
/// Fake quantization with a learnable range. `range` holds (alpha_l, alpha_u)
/// in a (1, 2, 1, 1) tensor.
Var fake_quantize(const Var& x, const Var& range, int bits);

/// Percentile with linear interpolation between order statistics.
double percentile(std::vector<float> values, double q);

/// Degenerate ranges are widened by 1e-4 * max(1, |alpha_u|) with a warning.
std::pair<float, float> widen_if_degenerate(float lo, float hi);

/// Averages the j-th and (100 - j)-th percentile of each sample.
std::pair<float, float> percentile_init(std::span<const Tensor> samples, double j = kDefaultPercentile);

/// Percentile range of a kernel, as used for weight quantization.
QuantParams weight_range(std::span<const float> weights, int bits, double j = kDefaultPercentile);

/// Fake-quantizes a kernel with a range recomputed from its current values.
/// The range is treated as a constant; in-range weights get a pass-through
/// gradient.
Var quantize_weights(const Var& w, int bits, double j = kDefaultPercentile);

/// Pushes alpha_u up so that alpha_u >= alpha_l + kMinRangeGap.
void enforce_range_gap(std::span<float> range);

}  // namespace odm
