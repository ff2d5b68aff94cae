#include "odm/complexity.hpp"

#include <algorithm>
#include <cstdio>

#include "odm/error.hpp"

namespace odm {

namespace {

std::string body(int i) { return "body." + std::to_string(i); }

std::size_t conv_weights(int cin, int cout, int k) {
  return static_cast<std::size_t>(cin) * static_cast<std::size_t>(cout) * static_cast<std::size_t>(k * k);
}

}  // namespace

std::vector<TensorSpec> model_tensors(const SRModelConfig& config, const OffsetPlan& plan) {
  config.validate();
  const int c = config.channels;
  const int k = config.kernel;
  const auto C = static_cast<std::size_t>(c);
  std::vector<TensorSpec> out{{"head.weight", conv_weights(3, c, k)}, {"head.bias", C}};
  for (int i = 0; i < config.slot_count(); ++i) {
    out.push_back({body(i) + ".weight", conv_weights(c, c, k)});
    out.push_back({body(i) + ".bias", C});
    out.push_back({body(i) + ".act_range", 2});
    if (plan.shifts(i)) out.push_back({body(i) + ".shift", C});
    if (plan.scales(i)) out.push_back({body(i) + ".scale", C});
  }
  if (!config.quantize_body_end) {
    out.push_back({"body_end.weight", conv_weights(c, c, k)});
    out.push_back({"body_end.bias", C});
  }
  for (int s = 0; s < config.upsample_stages(); ++s) {
    out.push_back({"up." + std::to_string(s) + ".weight", conv_weights(c, 4 * c, k)});
    out.push_back({"up." + std::to_string(s) + ".bias", 4 * C});
  }
  out.push_back({"tail.weight", conv_weights(c, 3, k)});
  out.push_back({"tail.bias", 3});
  return out;
}

void BitAssignment::set(const std::string& name, int bits) {
  if (bits < 1 || bits > 32) throw ConfigError("bit-width of '" + name + "' must lie in [1, 32]");
  bits_[name] = bits;
}

int BitAssignment::at(const std::string& name) const {
  const auto it = bits_.find(name);
  if (it == bits_.end()) throw AccountingError("no bit-width assigned to tensor '" + name + "'");
  return it->second;
}

BitAssignment BitAssignment::for_model(const SRModelConfig& config, const OffsetPlan& plan) {
  BitAssignment a;
  for (const auto& t : model_tensors(config, plan)) a.set(t.name, 32);
  for (int i = 0; i < config.slot_count(); ++i) {
    a.set(body(i) + ".weight", config.weight_bits);
    a.set(body(i) + ".input", config.act_bits);
    if (plan.shifts(i)) a.set(body(i) + ".shift", kOffsetBits);
    if (plan.scales(i)) a.set(body(i) + ".scale", kOffsetBits);
  }
  return a;
}

double ComplexityReport::params_k() const {
  double total = 0.0;
  for (const auto& l : layers) total += static_cast<double>(l.params);
  return total / 1000.0;
}

double ComplexityReport::storage_k() const {
  double total = 0.0;
  for (const auto& l : layers) total += l.storage_bits;
  return total / 32.0 / 1000.0;
}

double ComplexityReport::macs() const {
  double total = 0.0;
  for (const auto& l : layers) total += l.macs;
  return total;
}

double ComplexityReport::bitops_t() const {
  double total = 0.0;
  for (const auto& l : layers) total += l.bitops;
  return total / 1e12;
}

std::string ComplexityReport::csv() const {
  std::string out = "layer,params_k,storage_k,macs,bitops_t\n";
  char line[256];
  for (const auto& l : layers) {
    std::snprintf(line, sizeof line, "%s,%.6f,%.6f,%.0f,%.9f\n", l.layer.c_str(), l.params / 1000.0,
                  l.storage_bits / 32.0 / 1000.0, l.macs, l.bitops / 1e12);
    out += line;
  }
  std::snprintf(line, sizeof line, "total,%.6f,%.6f,%.0f,%.9f\n", params_k(), storage_k(), macs(), bitops_t());
  out += line;
  return out;
}

std::string ComplexityReport::table() const {
  std::size_t width = 5;
  for (const auto& l : layers) width = std::max(width, l.layer.size());
  const int w = static_cast<int>(width);
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s %12s %12s %16s %12s\n", w, "layer", "params_k", "storage_k", "macs", "bitops_t");
  out += line;
  for (const auto& l : layers) {
    std::snprintf(line, sizeof line, "%-*s %12.3f %12.3f %16.0f %12.4f\n", w, l.layer.c_str(), l.params / 1000.0,
                  l.storage_bits / 32.0 / 1000.0, l.macs, l.bitops / 1e12);
    out += line;
  }
  std::snprintf(line, sizeof line, "%-*s %12.3f %12.3f %16.0f %12.4f\n", w, "total", params_k(), storage_k(), macs(),
                bitops_t());
  out += line;
  return out;
}

ComplexityReport complexity_report(const SRModelConfig& config, const BitAssignment& bits, const OffsetPlan& plan,
                                   int out_w, int out_h) {
  config.validate();
  if (out_w <= 0 || out_h <= 0 || out_w % config.scale != 0 || out_h % config.scale != 0) {
    throw ConfigError("output resolution " + std::to_string(out_w) + "x" + std::to_string(out_h) +
                      " must be positive and divisible by scale " + std::to_string(config.scale));
  }
  for (int id : plan.shift_layers) {
    if (id < 0 || id >= config.slot_count()) throw ConfigError("offset plan names missing layer " + std::to_string(id));
  }
  for (int id : plan.scale_layers) {
    if (id < 0 || id >= config.slot_count()) throw ConfigError("offset plan names missing layer " + std::to_string(id));
  }
  const std::vector<TensorSpec> tensors = model_tensors(config, plan);
  std::map<std::string, std::size_t> count;
  for (const auto& t : tensors) count[t.name] = t.count;

  const int c = config.channels;
  const int k = config.kernel;
  const double lr_pixels = static_cast<double>(out_w / config.scale) * static_cast<double>(out_h / config.scale);
  ComplexityReport report;

  auto stored = [&](LayerCost& l, const std::string& name) {
    l.params += count.at(name);
    l.storage_bits += static_cast<double>(count.at(name)) * bits.at(name);
  };
  auto conv_layer = [&](const std::string& name, int cin, int cout, double pixels, int bw, int ba) {
    LayerCost l{name};
    stored(l, name + ".weight");
    stored(l, name + ".bias");
    l.macs = static_cast<double>(conv_weights(cin, cout, k)) * pixels;
    l.bitops = 2.0 * l.macs * bw * ba;
    return l;
  };

  report.layers.push_back(conv_layer("head", 3, c, lr_pixels, bits.at("head.weight"), 32));
  const double feature = static_cast<double>(c) * lr_pixels;
  for (int i = 0; i < config.slot_count(); ++i) {
    const std::string name = body(i);
    const int ba = bits.at(name + ".input");
    LayerCost l = conv_layer(name, c, c, lr_pixels, bits.at(name + ".weight"), ba);
    stored(l, name + ".act_range");
    report.layers.push_back(l);
    if (plan.scales(i)) {
      LayerCost o{name + ".scale"};
      stored(o, name + ".scale");
      o.bitops = feature * bits.at(name + ".scale") * 32.0;
      report.layers.push_back(o);
    }
    if (plan.shifts(i)) {
      LayerCost o{name + ".shift"};
      stored(o, name + ".shift");
      o.bitops = feature * bits.at(name + ".shift") * 32.0;
      report.layers.push_back(o);
    }
    const bool closes_block = i % 2 == 1 && i < 2 * config.num_blocks;
    if (closes_block) {
      LayerCost add{"block." + std::to_string(i / 2) + ".add"};
      add.bitops = feature * ba * ba;
      report.layers.push_back(add);
    }
  }
  if (!config.quantize_body_end) report.layers.push_back(conv_layer("body_end", c, c, lr_pixels, bits.at("body_end.weight"), 32));
  LayerCost skip{"global_skip.add"};
  skip.bitops = feature * 32.0 * 32.0;
  report.layers.push_back(skip);
  double pixels = lr_pixels;
  for (int s = 0; s < config.upsample_stages(); ++s) {
    const std::string name = "up." + std::to_string(s);
    report.layers.push_back(conv_layer(name, c, 4 * c, pixels, bits.at(name + ".weight"), 32));
    pixels *= 4.0;
  }
  report.layers.push_back(conv_layer("tail", c, 3, pixels, bits.at("tail.weight"), 32));
  return report;
}

double storage_size(const SRModelConfig& config, const BitAssignment& bits, const OffsetPlan& plan) {
  double total = 0.0;
  for (const auto& t : model_tensors(config, plan)) total += static_cast<double>(t.count) * bits.at(t.name);
  return total / 32.0 / 1000.0;
}

double bitops(const SRModelConfig& config, const BitAssignment& bits, const OffsetPlan& plan, int out_w, int out_h) {
  return complexity_report(config, bits, plan, out_w, out_h).bitops_t();
}

OffsetPlan accounting_offset_plan(int slot_count, double p, TopPRule rule) {
  const std::size_t k = offset_set_size(static_cast<std::size_t>(slot_count), p, rule);
  OffsetPlan plan;
  plan.p = p;
  plan.rule = rule;
  for (std::size_t i = 0; i < k; ++i) {
    plan.shift_layers.push_back(static_cast<int>(i));
    plan.scale_layers.push_back(slot_count - static_cast<int>(k) + static_cast<int>(i));
  }
  return plan;
}

}  // namespace odm
