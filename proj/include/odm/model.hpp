#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "odm/mismatch.hpp"
#include "odm/quantization.hpp"
#include "odm/tape.hpp"

namespace odm {

/// A bit-width of 32 leaves the operand in float.
inline constexpr int kFullPrecisionBits = 32;

/// EDSR-style network shape and quantization settings.
struct SRModelConfig {
  int num_blocks = 2;
  int channels = 8;
  int scale = 4;
  int kernel = 3;
  float residual_scaling = 1.0f;
  bool use_bn = false;
  int weight_bits = 2;
  int act_bits = 2;
  /// Also quantize the conv that closes the residual body.
  bool quantize_body_end = false;
  /// Fix weight ranges at calibration time instead of tracking the weights.
  bool freeze_weight_ranges = false;
  double percentile_j = kDefaultPercentile;

  /// Throws ConfigError on invalid combinations.
  void validate() const;
  int slot_count() const { return 2 * num_blocks + (quantize_body_end ? 1 : 0); }
  int upsample_stages() const { return scale == 4 ? 2 : 1; }

  /// 16 blocks, 64 channels, x4: the EDSR-baseline layout.
  static SRModelConfig edsr_baseline();
};

struct ConvLayer {
  Parameter weight;
  Parameter bias;
};

struct BatchNormLayer {
  Parameter gamma;
  Parameter beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
};

/// A convolution inside the residual body whose input and weight are
/// fake-quantized.
struct QuantizedLayerSlot {
  int layer_id = 0;
  ConvLayer conv;
  int weight_bits = 2;
  int act_bits = 2;
  Parameter act_range;  // (alpha_l, alpha_u)
  std::optional<QuantParams> frozen_weight_range;
  std::optional<OffsetParams> shift;
  std::optional<OffsetParams> scale;
  std::optional<BatchNormLayer> bn;

  QuantParams activation_params() const;
};

struct ForwardOptions {
  /// Fake-quantize slots (ignored for full-precision models).
  bool quantize = true;
  /// Batch-norm uses batch statistics and updates running statistics.
  bool training = false;
};

struct ForwardResult {
  Var sr;
  /// Input of every slot as seen by its activation quantizer.
  std::vector<Var> taps;
  /// Output of the last body conv, before the global skip.
  Var structural;
};

class SRModel {
 public:
  SRModel(const SRModelConfig& config, bool quantized, std::uint64_t seed);

  const SRModelConfig& config() const { return config_; }
  bool quantized() const { return quantized_; }

  std::vector<QuantizedLayerSlot>& slots() { return slots_; }
  const std::vector<QuantizedLayerSlot>& slots() const { return slots_; }

  const OffsetPlan& offset_plan() const { return plan_; }
  /// Creates identity offsets for every layer named in the plan.
  void install_offsets(const OffsetPlan& plan);

  /// Percentile initialization of activation ranges from full-precision
  /// features, one percentile pair per batch, averaged over batches.
  void calibrate_activation_ranges(std::span<const Tensor> batches);
  /// Pins every slot's weight range to the current percentile range.
  void freeze_weight_ranges();

  /// Copies conv and batch-norm weights by name. Quantizer state is kept.
  void copy_weights_from(const SRModel& other);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  /// Non-trainable float state (batch-norm running statistics).
  std::vector<std::pair<std::string, std::vector<float>*>> buffers();

  /// Records a differentiable forward pass onto `tape`.
  ForwardResult forward(Tape& tape, const Tensor& lr, const ForwardOptions& options = {});
  /// Inference forward; parameters enter the tape as constants.
  ForwardResult evaluate(Tape& tape, const Tensor& lr, bool quantize = true) const;
  Tensor predict(const Tensor& lr) const;

 private:
  ForwardResult run(Tape& tape, const Tensor& lr, const ForwardOptions& options, bool track) const;
  Var bind(Tape& tape, const Parameter& p, bool track) const;
  Var conv(Tape& tape, const ConvLayer& layer, const Var& x, bool track) const;
  Var slot_forward(Tape& tape, const QuantizedLayerSlot& slot, const Var& x, bool quantize, bool track,
                   std::vector<Var>& taps) const;
  Var batch_norm_forward(Tape& tape, const BatchNormLayer& bn, const Var& x, bool training, bool track) const;

  SRModelConfig config_;
  bool quantized_ = false;
  ConvLayer head_;
  std::vector<QuantizedLayerSlot> slots_;
  std::optional<ConvLayer> body_end_;
  std::vector<ConvLayer> upsampler_;
  ConvLayer tail_;
  OffsetPlan plan_;
};

}  // namespace odm
