#include "odm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "odm/error.hpp"

namespace odm {

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw FormatError("checkpoint is truncated at byte " + std::to_string(pos_));
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

/// Parameters that are not quantizer state, plus batch-norm buffers.
std::vector<std::pair<std::string, Tensor>> plain_tensors(const SRModel& model) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const Parameter* p : model.parameters()) {
    const std::string& n = p->name();
    if (n.ends_with(".act_range") || n.ends_with(".shift") || n.ends_with(".scale")) continue;
    out.emplace_back(n, p->as_tensor());
  }
  for (auto& [name, buf] : const_cast<SRModel&>(model).buffers()) {
    out.emplace_back(name, Tensor::channel_vector(*buf));
  }
  return out;
}

void write_quant(Writer& w, int layer, const QuantParams& q) {
  w.i32(layer);
  w.f32(q.alpha_l);
  w.f32(q.alpha_u);
  w.i32(q.bits);
}

}  // namespace

std::string model_config_text(const SRModelConfig& c, bool quantized) {
  std::ostringstream os;
  os.precision(17);
  os << "quantized=" << (quantized ? 1 : 0) << '\n'
     << "num_blocks=" << c.num_blocks << '\n'
     << "channels=" << c.channels << '\n'
     << "scale=" << c.scale << '\n'
     << "kernel=" << c.kernel << '\n'
     << "residual_scaling=" << c.residual_scaling << '\n'
     << "use_bn=" << (c.use_bn ? 1 : 0) << '\n'
     << "weight_bits=" << c.weight_bits << '\n'
     << "act_bits=" << c.act_bits << '\n'
     << "quantize_body_end=" << (c.quantize_body_end ? 1 : 0) << '\n'
     << "freeze_weight_ranges=" << (c.freeze_weight_ranges ? 1 : 0) << '\n'
     << "percentile_j=" << c.percentile_j << '\n';
  return os.str();
}

SRModelConfig parse_model_config_text(const std::string& text, bool* quantized) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("bad config line in checkpoint: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("checkpoint config lacks '") + key + "'");
    return it->second;
  };
  SRModelConfig c;
  try {
    c.num_blocks = std::stoi(get("num_blocks"));
    c.channels = std::stoi(get("channels"));
    c.scale = std::stoi(get("scale"));
    c.kernel = std::stoi(get("kernel"));
    c.residual_scaling = std::stof(get("residual_scaling"));
    c.use_bn = get("use_bn") == "1";
    c.weight_bits = std::stoi(get("weight_bits"));
    c.act_bits = std::stoi(get("act_bits"));
    c.quantize_body_end = get("quantize_body_end") == "1";
    c.freeze_weight_ranges = get("freeze_weight_ranges") == "1";
    c.percentile_j = std::stod(get("percentile_j"));
    if (quantized != nullptr) *quantized = get("quantized") == "1";
  } catch (const std::logic_error&) {
    throw FormatError("malformed number in checkpoint config");
  }
  return c;
}

std::string serialize_checkpoint(const SRModel& model) {
  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.str(model_config_text(model.config(), model.quantized()));

  const auto tensors = plain_tensors(model);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.str(name);
    w.i32(t.shape().n);
    w.i32(t.shape().c);
    w.i32(t.shape().h);
    w.i32(t.shape().w);
    for (float v : t.values()) w.f32(v);
  }

  const auto& slots = model.slots();
  w.u32(model.quantized() ? static_cast<std::uint32_t>(slots.size()) : 0u);
  if (model.quantized()) {
    for (const auto& s : slots) write_quant(w, s.layer_id, s.activation_params());
  }
  std::uint32_t frozen = 0;
  for (const auto& s : slots) frozen += s.frozen_weight_range ? 1 : 0;
  w.u32(frozen);
  for (const auto& s : slots) {
    if (s.frozen_weight_range) write_quant(w, s.layer_id, *s.frozen_weight_range);
  }

  w.str(model.offset_plan().to_text());
  std::uint32_t offsets = 0;
  for (const auto& s : slots) offsets += (s.shift ? 1 : 0) + (s.scale ? 1 : 0);
  w.u32(offsets);
  for (const auto& s : slots) {
    for (const OffsetParams* o : {s.shift ? &*s.shift : nullptr, s.scale ? &*s.scale : nullptr}) {
      if (o == nullptr) continue;
      w.i32(s.layer_id);
      w.u8(o->kind == OffsetKind::Shift ? 0 : 1);
      w.i32(o->bits);
      w.f32(o->alpha_l);
      w.f32(o->alpha_u);
      w.u32(static_cast<std::uint32_t>(o->values.size()));
      for (float v : o->values.values()) w.f32(v);
    }
  }
  return w.take();
}

SRModel deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("not an ODMQ checkpoint (bad magic bytes)");
  }
  Reader r(bytes);
  for (int i = 0; i < 4; ++i) r.u8();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  bool quantized = false;
  const SRModelConfig config = parse_model_config_text(r.str(), &quantized);
  SRModel model(config, quantized, 0);

  std::map<std::string, Tensor> tensors;
  const std::uint32_t tensor_count = r.u32();
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    std::string name = r.str();
    Shape s;
    s.n = r.i32();
    s.c = r.i32();
    s.h = r.i32();
    s.w = r.i32();
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw FormatError("negative shape for tensor '" + name + "'");
    r.need(s.numel() * 4);
    Tensor t(s);
    for (float& v : t.values()) v = r.f32();
    tensors.emplace(std::move(name), std::move(t));
  }

  std::vector<std::pair<int, QuantParams>> act;
  const std::uint32_t act_count = r.u32();
  for (std::uint32_t i = 0; i < act_count; ++i) {
    const int layer = r.i32();
    QuantParams q;
    q.alpha_l = r.f32();
    q.alpha_u = r.f32();
    q.bits = r.i32();
    act.emplace_back(layer, q);
  }
  std::vector<std::pair<int, QuantParams>> frozen;
  const std::uint32_t frozen_count = r.u32();
  for (std::uint32_t i = 0; i < frozen_count; ++i) {
    const int layer = r.i32();
    QuantParams q;
    q.alpha_l = r.f32();
    q.alpha_u = r.f32();
    q.bits = r.i32();
    frozen.emplace_back(layer, q);
  }

  const OffsetPlan plan = OffsetPlan::from_text(r.str());
  if (!plan.empty()) model.install_offsets(plan);
  const std::uint32_t offset_count = r.u32();
  auto& slots = model.slots();
  auto slot_at = [&](int layer) -> QuantizedLayerSlot& {
    if (layer < 0 || layer >= static_cast<int>(slots.size())) {
      throw FormatError("checkpoint names missing layer " + std::to_string(layer));
    }
    return slots[static_cast<std::size_t>(layer)];
  };
  for (std::uint32_t i = 0; i < offset_count; ++i) {
    QuantizedLayerSlot& slot = slot_at(r.i32());
    const std::uint8_t kind = r.u8();
    std::optional<OffsetParams>& target = kind == 0 ? slot.shift : slot.scale;
    if (!target) throw FormatError("offset record for a layer the plan does not select");
    target->bits = r.i32();
    target->alpha_l = r.f32();
    target->alpha_u = r.f32();
    const std::uint32_t n = r.u32();
    if (n != target->values.size()) throw FormatError("offset vector length mismatch");
    for (float& v : target->values.values()) v = r.f32();
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint payload");

  for (Parameter* p : model.parameters()) {
    const std::string& n = p->name();
    if (n.ends_with(".act_range") || n.ends_with(".shift") || n.ends_with(".scale")) continue;
    const auto it = tensors.find(n);
    if (it == tensors.end()) throw FormatError("checkpoint lacks tensor '" + n + "'");
    if (it->second.shape() != p->shape()) {
      throw FormatError("tensor '" + n + "' has shape " + it->second.shape().str() + ", expected " + p->shape().str());
    }
    p->assign(it->second.values());
  }
  for (auto& [name, buf] : model.buffers()) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint lacks buffer '" + name + "'");
    if (it->second.size() != buf->size()) throw FormatError("buffer '" + name + "' has the wrong length");
    buf->assign(it->second.values().begin(), it->second.values().end());
  }
  for (const auto& [layer, q] : act) {
    QuantizedLayerSlot& slot = slot_at(layer);
    slot.act_range.values()[0] = q.alpha_l;
    slot.act_range.values()[1] = q.alpha_u;
    slot.act_bits = q.bits;
  }
  for (const auto& [layer, q] : frozen) slot_at(layer).frozen_weight_range = q;
  return model;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_checkpoint(const std::filesystem::path& path, const SRModel& model) {
  write_file_atomic(path, serialize_checkpoint(model));
}

SRModel load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(read_file(path)); }

}  // namespace odm
