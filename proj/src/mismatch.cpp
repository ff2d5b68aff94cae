#include "odm/mismatch.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "odm/error.hpp"
#include "odm/model.hpp"

namespace odm {

std::string to_string(TopPRule rule) { return rule == TopPRule::SharedBudget ? "shared_budget" : "per_list"; }

TopPRule parse_topp_rule(const std::string& text) {
  if (text == "shared_budget") return TopPRule::SharedBudget;
  if (text == "per_list") return TopPRule::PerList;
  throw ConfigError("unknown top-p rule '" + text + "' (expected shared_budget or per_list)");
}

bool OffsetPlan::shifts(int layer_id) const {
  return std::find(shift_layers.begin(), shift_layers.end(), layer_id) != shift_layers.end();
}

bool OffsetPlan::scales(int layer_id) const {
  return std::find(scale_layers.begin(), scale_layers.end(), layer_id) != scale_layers.end();
}

namespace {

std::string join_ids(const std::vector<int>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(ids[i]);
  }
  return out;
}

std::vector<int> split_ids(const std::string& text) {
  std::vector<int> ids;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      ids.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw FormatError("bad layer id '" + item + "' in offset plan");
    }
  }
  return ids;
}

}  // namespace

std::string OffsetPlan::to_text() const {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", p);
  os << "p=" << buf << '\n';
  os << "rule=" << to_string(rule) << '\n';
  os << "shift=" << join_ids(shift_layers) << '\n';
  os << "scale=" << join_ids(scale_layers) << '\n';
  return os.str();
}

OffsetPlan OffsetPlan::from_text(const std::string& text) {
  OffsetPlan plan;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("offset plan line without '=': " + line);
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "p") {
      plan.p = std::stod(value);
    } else if (key == "rule") {
      plan.rule = parse_topp_rule(value);
    } else if (key == "shift") {
      plan.shift_layers = split_ids(value);
    } else if (key == "scale") {
      plan.scale_layers = split_ids(value);
    } else {
      throw FormatError("unknown key '" + key + "' in offset plan");
    }
  }
  return plan;
}

OffsetParams OffsetParams::identity(OffsetKind kind, int channels, const std::string& name) {
  OffsetParams o;
  o.kind = kind;
  if (kind == OffsetKind::Shift) {
    o.values = Parameter(name, {1, channels, 1, 1}, 0.0f);
    o.alpha_l = -1.0f;
    o.alpha_u = 0.875f;
  } else {
    o.values = Parameter(name, {1, channels, 1, 1}, 1.0f);
    o.alpha_l = 0.125f;
    o.alpha_u = 2.0f;
  }
  return o;
}

std::vector<float> OffsetParams::quantized() const {
  const Tensor q = fake_quantize(values.as_tensor(), grid());
  return q.storage();
}

double mismatch_scalar(const Tensor& x) { return population_std(x.values()); }

LayerMismatch mismatch_indicators(const Tensor& xhat, int layer_id) {
  if (xhat.empty()) throw DimensionError("mismatch of an empty feature");
  if (xhat.shape().c < 2) {
    warn("layer " + std::to_string(layer_id) + " has a single channel; mismatch indicators set to 0");
    return {layer_id, 0.0, 0.0};
  }
  const auto means = channel_means(xhat);
  const auto stds = channel_stds(xhat);
  const std::vector<float> mf(means.begin(), means.end());
  const std::vector<float> sf(stds.begin(), stds.end());
  return {layer_id, population_std(mf), population_std(sf)};
}

std::vector<LayerMismatch> collect_mismatch(const SRModel& teacher, const Tensor& patch) {
  if (patch.empty()) throw UsageError("mismatch calibration patch is empty");
  if (teacher.slots().empty()) {
    warn("model has no quantized layers; no mismatch indicators collected");
    return {};
  }
  Tape tape;
  const ForwardResult res = teacher.evaluate(tape, patch, /*quantize=*/false);
  std::vector<LayerMismatch> out;
  out.reserve(res.taps.size());
  for (std::size_t i = 0; i < res.taps.size(); ++i) {
    out.push_back(mismatch_indicators(res.taps[i].value(), teacher.slots()[i].layer_id));
  }
  return out;
}

std::size_t offset_set_size(std::size_t layers, double p, TopPRule rule) {
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("offset ratio p must lie in (0, 1]");
  double want = p * static_cast<double>(layers);
  if (rule == TopPRule::SharedBudget) want /= 2.0;
  // Absorb representation error so that e.g. 0.3 * 10 selects 3, not 4.
  const auto k = static_cast<std::size_t>(std::ceil(want - 1e-9));
  return std::min(k, layers);
}

namespace {

std::vector<int> top_k(std::span<const LayerMismatch> reports, std::size_t k, double LayerMismatch::*field) {
  std::vector<LayerMismatch> sorted(reports.begin(), reports.end());
  std::sort(sorted.begin(), sorted.end(), [field](const LayerMismatch& a, const LayerMismatch& b) {
    if (a.*field != b.*field) return a.*field > b.*field;
    return a.layer_id < b.layer_id;
  });
  std::vector<int> ids;
  for (std::size_t i = 0; i < k; ++i) ids.push_back(sorted[i].layer_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

OffsetPlan select_offset_layers(std::span<const LayerMismatch> reports, double p, TopPRule rule) {
  if (reports.empty()) throw UsageError("offset selection needs at least one layer report");
  const std::size_t k = offset_set_size(reports.size(), p, rule);
  OffsetPlan plan;
  plan.p = p;
  plan.rule = rule;
  plan.shift_layers = top_k(reports, k, &LayerMismatch::m_mu);
  plan.scale_layers = top_k(reports, k, &LayerMismatch::m_sigma);
  return plan;
}

namespace {

void check_offset(const OffsetParams* o, bool selected, OffsetKind kind, int layer_id, const Var& x) {
  const char* what = kind == OffsetKind::Shift ? "shift" : "scale";
  if (o != nullptr && !selected) {
    throw ConfigError(std::string(what) + " offsets supplied for layer " + std::to_string(layer_id) +
                      ", which the plan does not select");
  }
  if (o == nullptr && selected) {
    throw ConfigError("layer " + std::to_string(layer_id) + " is selected for " + what + " offsets but none were supplied");
  }
  if (o == nullptr) return;
  if (o->kind != kind) throw ConfigError(std::string("offset of the wrong kind passed as ") + what);
  if (o->values.size() != static_cast<std::size_t>(x.shape().c)) {
    throw DimensionError(std::string(what) + " offsets of length " + std::to_string(o->values.size()) +
                         " for feature " + x.shape().str());
  }
}

template <class Bind>
Var apply_offsets_with(const Var& x, const OffsetPlan& plan, int layer_id, const OffsetParams* shift,
                       const OffsetParams* scale, Bind bind) {
  check_offset(shift, plan.shifts(layer_id), OffsetKind::Shift, layer_id, x);
  check_offset(scale, plan.scales(layer_id), OffsetKind::Scale, layer_id, x);
  Var y = x;
  if (scale != nullptr) y = broadcast_mul_channel(y, fake_quantize(bind(*scale), scale->grid()));
  if (shift != nullptr) y = broadcast_add_channel(y, fake_quantize(bind(*shift), shift->grid()));
  return y;
}

}  // namespace

Var apply_offsets(const Var& x, const OffsetPlan& plan, int layer_id, OffsetParams* shift, OffsetParams* scale) {
  Tape& tape = x.tape();
  return apply_offsets_with(x, plan, layer_id, shift, scale, [&tape](const OffsetParams& o) {
    return tape.parameter(const_cast<Parameter&>(o.values));
  });
}

Var apply_offsets_frozen(const Var& x, const OffsetPlan& plan, int layer_id, const OffsetParams* shift,
                         const OffsetParams* scale) {
  Tape& tape = x.tape();
  return apply_offsets_with(x, plan, layer_id, shift, scale,
                            [&tape](const OffsetParams& o) { return tape.constant(o.values.as_tensor()); });
}

std::string format_mismatch_report(std::span<const LayerMismatch> reports, const OffsetPlan& plan) {
  std::string out;
  char line[160];
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%d %.9g %.9g %d %d\n", r.layer_id, r.m_mu, r.m_sigma,
                  plan.shifts(r.layer_id) ? 1 : 0, plan.scales(r.layer_id) ? 1 : 0);
    out += line;
  }
  return out;
}

}  // namespace odm
