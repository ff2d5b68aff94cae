#include "odm/model.hpp"

#include <cmath>
#include <map>

#include "odm/error.hpp"
#include "odm/random.hpp"

namespace odm {

void SRModelConfig::validate() const {
  if (num_blocks < 1) throw ConfigError("num_blocks must be >= 1");
  if (channels < 1) throw ConfigError("channels must be >= 1");
  if (scale != 2 && scale != 4) throw ConfigError("scale must be 2 or 4, got " + std::to_string(scale));
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("kernel must be odd and positive");
  const auto bits_ok = [](int b) { return (b >= 1 && b <= 30) || b == 32; };
  if (!bits_ok(weight_bits) || !bits_ok(act_bits)) {
    throw ConfigError("bit-widths must lie in [1, 30] or be 32 (full precision)");
  }
  if (!std::isfinite(residual_scaling)) throw ConfigError("residual_scaling must be finite");
  if (!(percentile_j > 0.0 && percentile_j < 50.0)) throw ConfigError("percentile_j must lie in (0, 50)");
}

SRModelConfig SRModelConfig::edsr_baseline() {
  SRModelConfig c;
  c.num_blocks = 16;
  c.channels = 64;
  c.scale = 4;
  return c;
}

QuantParams QuantizedLayerSlot::activation_params() const {
  return QuantParams{act_range.values()[0], act_range.values()[1], act_bits, true};
}

namespace {

ConvLayer make_conv(const std::string& name, int cin, int cout, int k, Rng& rng) {
  ConvLayer layer{Parameter(name + ".weight", {cout, cin, k, k}), Parameter(name + ".bias", {1, cout, 1, 1})};
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
  for (float& v : layer.weight.values()) v = static_cast<float>(rng.uniform(-bound, bound));
  for (float& v : layer.bias.values()) v = static_cast<float>(rng.uniform(-bound, bound));
  return layer;
}

BatchNormLayer make_bn(const std::string& name, int channels) {
  return BatchNormLayer{Parameter(name + ".gamma", {1, channels, 1, 1}, 1.0f),
                        Parameter(name + ".beta", {1, channels, 1, 1}, 0.0f),
                        std::vector<float>(static_cast<std::size_t>(channels), 0.0f),
                        std::vector<float>(static_cast<std::size_t>(channels), 1.0f)};
}

constexpr float kBnMomentum = 0.1f;
constexpr float kBnEps = 1e-5f;

}  // namespace

SRModel::SRModel(const SRModelConfig& config, bool quantized, std::uint64_t seed)
    : config_(config), quantized_(quantized) {
  config_.validate();
  Rng rng(seed);
  const int c = config_.channels;
  const int k = config_.kernel;
  head_ = make_conv("head", 3, c, k, rng);
  for (int i = 0; i < config_.slot_count(); ++i) {
    QuantizedLayerSlot slot;
    slot.layer_id = i;
    const std::string name = "body." + std::to_string(i);
    slot.conv = make_conv(name, c, c, k, rng);
    slot.weight_bits = config_.weight_bits;
    slot.act_bits = config_.act_bits;
    slot.act_range = Parameter(name + ".act_range", {1, 2, 1, 1});
    slot.act_range.values()[0] = -1.0f;
    slot.act_range.values()[1] = 1.0f;
    const bool in_block = i < 2 * config_.num_blocks;
    if (config_.use_bn && in_block) slot.bn = make_bn(name + ".bn", c);
    slots_.push_back(std::move(slot));
  }
  if (!config_.quantize_body_end) body_end_ = make_conv("body_end", c, c, k, rng);
  for (int s = 0; s < config_.upsample_stages(); ++s) {
    upsampler_.push_back(make_conv("up." + std::to_string(s), c, 4 * c, k, rng));
  }
  tail_ = make_conv("tail", c, 3, k, rng);
}

void SRModel::install_offsets(const OffsetPlan& plan) {
  if (!quantized_) throw UsageError("distribution offsets need a quantized model");
  const auto check = [&](const std::vector<int>& ids) {
    for (int id : ids) {
      if (id < 0 || id >= static_cast<int>(slots_.size())) {
        throw ConfigError("offset plan names layer " + std::to_string(id) + " but the model has " +
                          std::to_string(slots_.size()) + " quantized layers");
      }
    }
  };
  check(plan.shift_layers);
  check(plan.scale_layers);
  for (auto& slot : slots_) {
    const std::string name = "body." + std::to_string(slot.layer_id);
    slot.shift.reset();
    slot.scale.reset();
    if (plan.shifts(slot.layer_id)) slot.shift = OffsetParams::identity(OffsetKind::Shift, config_.channels, name + ".shift");
    if (plan.scales(slot.layer_id)) slot.scale = OffsetParams::identity(OffsetKind::Scale, config_.channels, name + ".scale");
  }
  plan_ = plan;
}

void SRModel::calibrate_activation_ranges(std::span<const Tensor> batches) {
  if (batches.empty()) throw UsageError("activation calibration needs at least one batch");
  std::vector<std::vector<Tensor>> per_slot(slots_.size());
  for (const Tensor& batch : batches) {
    Tape tape;
    const ForwardResult res = evaluate(tape, batch, /*quantize=*/false);
    for (std::size_t i = 0; i < slots_.size(); ++i) per_slot[i].push_back(res.taps[i].value());
  }
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const auto [lo, hi] = percentile_init(per_slot[i], config_.percentile_j);
    slots_[i].act_range.values()[0] = lo;
    slots_[i].act_range.values()[1] = hi;
  }
}

void SRModel::freeze_weight_ranges() {
  for (auto& slot : slots_) {
    if (slot.weight_bits == kFullPrecisionBits) continue;
    slot.frozen_weight_range = weight_range(slot.conv.weight.values(), slot.weight_bits, config_.percentile_j);
  }
}

void SRModel::copy_weights_from(const SRModel& other) {
  std::map<std::string, const Parameter*> source;
  for (const Parameter* p : other.parameters()) source.emplace(p->name(), p);
  for (Parameter* p : parameters()) {
    const std::string& n = p->name();
    const bool quant_state = n.ends_with(".act_range") || n.ends_with(".shift") || n.ends_with(".scale");
    if (quant_state) continue;
    const auto it = source.find(n);
    if (it == source.end()) throw ConfigError("source model has no parameter '" + n + "'");
    if (it->second->shape() != p->shape()) {
      throw DimensionError("parameter '" + n + "' shape " + p->shape().str() + " vs " + it->second->shape().str());
    }
    p->assign(it->second->values());
  }
  for (std::size_t i = 0; i < slots_.size() && i < other.slots_.size(); ++i) {
    if (slots_[i].bn && other.slots_[i].bn) {
      slots_[i].bn->running_mean = other.slots_[i].bn->running_mean;
      slots_[i].bn->running_var = other.slots_[i].bn->running_var;
    }
  }
}

std::vector<Parameter*> SRModel::parameters() {
  std::vector<Parameter*> out{&head_.weight, &head_.bias};
  for (auto& slot : slots_) {
    out.push_back(&slot.conv.weight);
    out.push_back(&slot.conv.bias);
    if (slot.bn) {
      out.push_back(&slot.bn->gamma);
      out.push_back(&slot.bn->beta);
    }
    if (quantized_) out.push_back(&slot.act_range);
    if (slot.shift) out.push_back(&slot.shift->values);
    if (slot.scale) out.push_back(&slot.scale->values);
  }
  if (body_end_) {
    out.push_back(&body_end_->weight);
    out.push_back(&body_end_->bias);
  }
  for (auto& up : upsampler_) {
    out.push_back(&up.weight);
    out.push_back(&up.bias);
  }
  out.push_back(&tail_.weight);
  out.push_back(&tail_.bias);
  return out;
}

std::vector<const Parameter*> SRModel::parameters() const {
  auto mut = const_cast<SRModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<std::pair<std::string, std::vector<float>*>> SRModel::buffers() {
  std::vector<std::pair<std::string, std::vector<float>*>> out;
  for (auto& slot : slots_) {
    if (!slot.bn) continue;
    const std::string name = "body." + std::to_string(slot.layer_id) + ".bn";
    out.emplace_back(name + ".running_mean", &slot.bn->running_mean);
    out.emplace_back(name + ".running_var", &slot.bn->running_var);
  }
  return out;
}

ForwardResult SRModel::forward(Tape& tape, const Tensor& lr, const ForwardOptions& options) {
  return run(tape, lr, options, /*track=*/true);
}

ForwardResult SRModel::evaluate(Tape& tape, const Tensor& lr, bool quantize) const {
  return run(tape, lr, ForwardOptions{quantize, false}, /*track=*/false);
}

Tensor SRModel::predict(const Tensor& lr) const {
  Tape tape;
  return evaluate(tape, lr).sr.value();
}

Var SRModel::bind(Tape& tape, const Parameter& p, bool track) const {
  // `track` is only set on the non-const forward() path.
  return track ? tape.parameter(const_cast<Parameter&>(p)) : tape.constant(p.as_tensor());
}

Var SRModel::conv(Tape& tape, const ConvLayer& layer, const Var& x, bool track) const {
  return conv2d(x, bind(tape, layer.weight, track), bind(tape, layer.bias, track), 1, config_.kernel / 2);
}

Var SRModel::batch_norm_forward(Tape& tape, const BatchNormLayer& bn, const Var& x, bool training, bool track) const {
  if (training) {
    if (track) {
      auto& mut = const_cast<BatchNormLayer&>(bn);
      const auto means = channel_means(x.value());
      const auto stds = channel_stds(x.value());
      for (std::size_t c = 0; c < means.size(); ++c) {
        mut.running_mean[c] = (1.0f - kBnMomentum) * mut.running_mean[c] + kBnMomentum * static_cast<float>(means[c]);
        mut.running_var[c] =
            (1.0f - kBnMomentum) * mut.running_var[c] + kBnMomentum * static_cast<float>(stds[c] * stds[c]);
      }
    }
    return batch_norm(x, bind(tape, bn.gamma, track), bind(tape, bn.beta, track), kBnEps);
  }
  std::vector<float> neg_mean(bn.running_mean.size());
  std::vector<float> inv_std(bn.running_var.size());
  for (std::size_t c = 0; c < neg_mean.size(); ++c) {
    neg_mean[c] = -bn.running_mean[c];
    inv_std[c] = 1.0f / std::sqrt(bn.running_var[c] + kBnEps);
  }
  Var y = broadcast_add_channel(x, tape.constant(Tensor::channel_vector(neg_mean)));
  y = broadcast_mul_channel(y, tape.constant(Tensor::channel_vector(inv_std)));
  y = broadcast_mul_channel(y, bind(tape, bn.gamma, track));
  return broadcast_add_channel(y, bind(tape, bn.beta, track));
}

Var SRModel::slot_forward(Tape& tape, const QuantizedLayerSlot& slot, const Var& x, bool quantize, bool track,
                          std::vector<Var>& taps) const {
  const std::string where = "quantized layer " + std::to_string(slot.layer_id);
  if (!quantize) {
    taps.push_back(x);
    Var y = conv(tape, slot.conv, x, track);
    y.value().check_finite(where + " output");
    return y;
  }
  Var in;
  if (track) {
    auto& mut = const_cast<QuantizedLayerSlot&>(slot);
    in = apply_offsets(x, plan_, slot.layer_id, mut.shift ? &*mut.shift : nullptr, mut.scale ? &*mut.scale : nullptr);
  } else {
    in = apply_offsets_frozen(x, plan_, slot.layer_id, slot.shift ? &*slot.shift : nullptr,
                              slot.scale ? &*slot.scale : nullptr);
  }
  in.value().check_finite(where + " input");
  taps.push_back(in);
  Var xq = in;
  if (slot.act_bits != kFullPrecisionBits) {
    xq = track ? fake_quantize(in, bind(tape, slot.act_range, true), slot.act_bits)
               : fake_quantize(in, slot.activation_params());
  }
  const Var w = bind(tape, slot.conv.weight, track);
  w.value().check_finite(where + " weight");
  Var wq = w;
  if (slot.frozen_weight_range) {
    wq = fake_quantize(w, *slot.frozen_weight_range);
  } else if (slot.weight_bits != kFullPrecisionBits) {
    wq = quantize_weights(w, slot.weight_bits, config_.percentile_j);
  }
  Var y = conv2d(xq, wq, bind(tape, slot.conv.bias, track), 1, config_.kernel / 2);
  y.value().check_finite(where + " output");
  return y;
}

ForwardResult SRModel::run(Tape& tape, const Tensor& lr, const ForwardOptions& options, bool track) const {
  if (lr.shape().c != 3) throw DimensionError("model input must have 3 channels, got " + lr.shape().str());
  lr.check_finite("model input");
  const bool quantize = quantized_ && options.quantize;
  ForwardResult res;
  const Var x = tape.constant(lr);
  const Var head = conv(tape, head_, x, track);
  Var r = head;
  for (int b = 0; b < config_.num_blocks; ++b) {
    const auto& first = slots_[static_cast<std::size_t>(2 * b)];
    const auto& second = slots_[static_cast<std::size_t>(2 * b + 1)];
    Var t = slot_forward(tape, first, r, quantize, track, res.taps);
    if (first.bn) t = batch_norm_forward(tape, *first.bn, t, options.training, track);
    t = relu(t);
    t = slot_forward(tape, second, t, quantize, track, res.taps);
    if (second.bn) t = batch_norm_forward(tape, *second.bn, t, options.training, track);
    if (config_.residual_scaling != 1.0f) t = mul_scalar(t, config_.residual_scaling);
    r = add(r, t);
  }
  res.structural = body_end_ ? conv(tape, *body_end_, r, track)
                             : slot_forward(tape, slots_.back(), r, quantize, track, res.taps);
  Var f = add(res.structural, head);
  for (const auto& up : upsampler_) f = pixel_shuffle(conv(tape, up, f, track), 2);
  res.sr = conv(tape, tail_, f, track);
  res.sr.value().check_finite("model output");
  return res;
}

}  // namespace odm
