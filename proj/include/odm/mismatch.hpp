#pragma once

#include <span>
#include <string>
#include <vector>

#include "odm/quantization.hpp"
#include "odm/tape.hpp"

namespace odm {

class SRModel;

/// Channel-wise distribution mismatch of one quantized layer's input.
struct LayerMismatch {
  int layer_id = 0;
  double m_mu = 0.0;     // std over channels of the channel means
  double m_sigma = 0.0;  // std over channels of the channel stds
};

/// How many layers each offset set receives.
enum class TopPRule {
  /// p is the fraction of layers that get an offset; shift and scale split
  /// that budget evenly: ceil(p * L / 2) layers each.
  SharedBudget,
  /// Each list is ranked separately: ceil(p * L) layers each.
  PerList,
};

std::string to_string(TopPRule rule);
TopPRule parse_topp_rule(const std::string& text);

struct OffsetPlan {
  std::vector<int> shift_layers;  // ascending layer ids
  std::vector<int> scale_layers;
  double p = 0.0;
  TopPRule rule = TopPRule::SharedBudget;

  bool shifts(int layer_id) const;
  bool scales(int layer_id) const;
  bool empty() const { return shift_layers.empty() && scale_layers.empty(); }

  /// "p=..", "rule=..", "shift=a,b", "scale=c,d" lines.
  std::string to_text() const;
  static OffsetPlan from_text(const std::string& text);
};

enum class OffsetKind { Shift, Scale };

inline constexpr int kOffsetBits = 4;

/// Learnable per-channel shift or scale, fake-quantized on a fixed 4-bit
/// grid before use. Both grids have step 1/8 so that the identity values
/// (0 for shift, 1 for scale) are exact grid points.
struct OffsetParams {
  OffsetKind kind = OffsetKind::Shift;
  Parameter values;
  int bits = kOffsetBits;
  float alpha_l = -1.0f;
  float alpha_u = 0.875f;

  static OffsetParams identity(OffsetKind kind, int channels, const std::string& name);
  QuantParams grid() const { return {alpha_l, alpha_u, bits, false}; }
  /// Values as they are applied, i.e. after fake quantization.
  std::vector<float> quantized() const;
};

/// Population std over every element.
double mismatch_scalar(const Tensor& x);

/// Needs at least two channels; with one channel both indicators are 0 and
/// a warning is emitted.
LayerMismatch mismatch_indicators(const Tensor& xhat, int layer_id = 0);

/// Runs the full-precision teacher once and measures the input of every
/// quantized slot, in layer order.
std::vector<LayerMismatch> collect_mismatch(const SRModel& teacher, const Tensor& patch);

std::size_t offset_set_size(std::size_t layers, double p, TopPRule rule);

/// Top-p selection on m_mu (shift) and m_sigma (scale); equal values go to
/// the lower layer id first.
OffsetPlan select_offset_layers(std::span<const LayerMismatch> reports, double p,
                                TopPRule rule = TopPRule::SharedBudget);

/// Applies x * q(S_sigma) and then + q(S_mu) for the sets `layer_id`
/// belongs to. Offsets must be supplied exactly for selected layers.
Var apply_offsets(const Var& x, const OffsetPlan& plan, int layer_id, OffsetParams* shift, OffsetParams* scale);
/// Same as apply_offsets with the offsets entering the tape as constants.
Var apply_offsets_frozen(const Var& x, const OffsetPlan& plan, int layer_id, const OffsetParams* shift,
                         const OffsetParams* scale);

/// One line per layer: "<id> <m_mu> <m_sigma> <shift 0|1> <scale 0|1>".
std::string format_mismatch_report(std::span<const LayerMismatch> reports, const OffsetPlan& plan);

}  // namespace odm
