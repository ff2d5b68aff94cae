#include "odm/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "odm/error.hpp"

namespace odm {

namespace {

struct Entry {
  const char* name;
  const char* description;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("bad value '" + value + "' for " + key + " (expected " + expected + ")");
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
  if (value == "0" || value == "false" || value == "no" || value == "off") return false;
  bad_value(key, value, "true or false");
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string fmt(bool v) { return v ? "true" : "false"; }

#define ODM_INT(key, field, desc)                                                              \
  Entry {                                                                                      \
    key, desc, [](RunConfig& c, const std::string& v) { c.field = parse_number<int>(key, v); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }                             \
  }
#define ODM_SIZE(key, field, desc)                                                                     \
  Entry {                                                                                              \
    key, desc, [](RunConfig& c, const std::string& v) { c.field = parse_number<std::size_t>(key, v); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }                                     \
  }
#define ODM_U64(key, field, desc)                                                                        \
  Entry {                                                                                                \
    key, desc, [](RunConfig& c, const std::string& v) { c.field = parse_number<std::uint64_t>(key, v); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }                                       \
  }
#define ODM_REAL(key, field, type, desc)                                                        \
  Entry {                                                                                       \
    key, desc, [](RunConfig& c, const std::string& v) { c.field = parse_number<type>(key, v); }, \
        [](const RunConfig& c) { return fmt(static_cast<double>(c.field)); }                    \
  }
#define ODM_BOOL(key, field, desc)                                                      \
  Entry {                                                                               \
    key, desc, [](RunConfig& c, const std::string& v) { c.field = parse_bool(key, v); }, \
        [](const RunConfig& c) { return fmt(c.field); }                                 \
  }
#define ODM_PATH(key, field, desc)                                         \
  Entry {                                                                  \
    key, desc, [](RunConfig& c, const std::string& v) { c.field = v; },    \
        [](const RunConfig& c) { return c.field.string(); }                \
  }
#define ODM_STR(key, field, desc)                                      \
  Entry {                                                              \
    key, desc, [](RunConfig& c, const std::string& v) { c.field = v; }, \
        [](const RunConfig& c) { return c.field; }                     \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      ODM_INT("num_blocks", model.num_blocks, "residual blocks in the body"),
      ODM_INT("channels", model.channels, "feature channels"),
      ODM_INT("scale", model.scale, "upscaling factor (2 or 4)"),
      ODM_INT("kernel", model.kernel, "conv kernel size (odd)"),
      ODM_REAL("residual_scaling", model.residual_scaling, float, "multiplier on each residual branch"),
      ODM_BOOL("use_bn", model.use_bn, "batch norm after every body conv"),
      ODM_INT("weight_bits", model.weight_bits, "bit-width of body conv weights (32 = float)"),
      ODM_INT("act_bits", model.act_bits, "bit-width of body conv inputs (32 = float)"),
      ODM_BOOL("quantize_body_end", model.quantize_body_end, "also quantize the conv closing the body"),
      ODM_BOOL("freeze_weight_ranges", model.freeze_weight_ranges, "fix weight ranges at calibration"),
      ODM_REAL("percentile_j", model.percentile_j, double, "percentile (in %) for range initialization"),
      ODM_INT("epochs", train.schedule.epochs, "training epochs"),
      ODM_REAL("lr0", train.schedule.lr0, double, "initial learning rate"),
      ODM_INT("halve_every", train.schedule.halve_every, "epochs between learning-rate halvings"),
      ODM_INT("batch_size", train.schedule.batch_size, "patches per step"),
      Entry{"optimizer", "sgd or adam",
            [](RunConfig& c, const std::string& v) { c.train.optimizer = parse_optimizer(v); },
            [](const RunConfig& c) { return to_string(c.train.optimizer); }},
      ODM_INT("max_steps", train.max_steps, "stop after this many steps (0 = full schedule)"),
      ODM_REAL("lambda_skt", train.loss.lambda_skt, float, "weight of the structural feature term"),
      ODM_REAL("lambda_v", train.loss.lambda_v, float, "weight of the variance regularizer"),
      ODM_BOOL("cooperative", train.loss.cooperative, "drop variance gradients that oppose reconstruction"),
      ODM_BOOL("variance_reg", train.loss.variance_reg, "enable the variance regularizer"),
      ODM_BOOL("offsets", offsets, "install shift/scale offsets on mismatched layers"),
      ODM_REAL("p", p, double, "fraction of layers that receive offsets"),
      Entry{"topp_rule", "shared_budget or per_list",
            [](RunConfig& c, const std::string& v) { c.topp_rule = parse_topp_rule(v); },
            [](const RunConfig& c) { return to_string(c.topp_rule); }},
      ODM_U64("seed", seed, "seed for data, init and shuffling"),
      ODM_STR("train_data", train_data, "'synthetic' or a directory of PNG images"),
      ODM_SIZE("train_patches", train_patches, "synthetic training patches"),
      ODM_U64("data_seed", data_seed, "seed of the synthetic training set and PNG crops"),
      ODM_STR("eval_data", eval_data, "'synthetic' or a directory of PNG images"),
      ODM_SIZE("eval_patches", eval_patches, "synthetic evaluation patches"),
      ODM_U64("eval_seed", eval_seed, "seed of the synthetic evaluation set"),
      ODM_INT("patch_size", patch_size, "HR patch size in pixels"),
      Entry{"downsample", "box or bicubic",
            [](RunConfig& c, const std::string& v) { c.downsample = parse_downsample(v); },
            [](const RunConfig& c) { return to_string(c.downsample); }},
      ODM_INT("crops_per_image", crops_per_image, "random crops per PNG image"),
      ODM_INT("pretrain_steps", pretrain_steps, "teacher training steps"),
      ODM_REAL("pretrain_lr", pretrain_lr, double, "teacher learning rate"),
      ODM_PATH("output_dir", output_dir, "directory for every artifact"),
      ODM_PATH("teacher", teacher, "teacher checkpoint (default <output_dir>/teacher.odmq)"),
      ODM_PATH("plan", plan, "offset plan (default <output_dir>/offset_plan.txt)"),
      ODM_PATH("checkpoint", checkpoint, "student checkpoint (default <output_dir>/student.odmq)"),
      ODM_BOOL("save_images", save_images, "eval writes SR images as PNG"),
  };
  return table;
}

#undef ODM_INT
#undef ODM_SIZE
#undef ODM_U64
#undef ODM_REAL
#undef ODM_BOOL
#undef ODM_PATH
#undef ODM_STR

const Entry& find_entry(const std::string& key) {
  for (const auto& e : entries()) {
    if (key == e.name) return e;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) { find_entry(key).set(*this, trim(value)); }

std::string RunConfig::get(const std::string& key) const { return find_entry(key).get(*this); }

void RunConfig::apply_text(const std::string& text, const std::string& origin) {
  std::istringstream is(text);
  std::string line;
  int number = 0;
  while (std::getline(is, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected key=value, got '" + line + "'");
    }
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_text(ss.str(), path.string());
}

void RunConfig::validate() const {
  model.validate();
  train.loss.validate();
  train.schedule.validate();
  if (train.max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p must lie in [0, 1]");
  if (patch_size <= 0 || patch_size % model.scale != 0) {
    throw ConfigError("patch_size must be a positive multiple of scale");
  }
  if (train_patches == 0 || eval_patches == 0) throw ConfigError("patch counts must be positive");
  if (crops_per_image <= 0) throw ConfigError("crops_per_image must be positive");
  if (pretrain_steps < 0) throw ConfigError("pretrain_steps must be >= 0");
  if (!(pretrain_lr > 0.0)) throw ConfigError("pretrain_lr must be positive");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& e : entries()) out += std::string(e.name) + "=" + e.get(*this) + "\n";
  return out;
}

std::filesystem::path RunConfig::teacher_path() const {
  return teacher.empty() ? output_dir / "teacher.odmq" : teacher;
}

std::filesystem::path RunConfig::plan_path() const { return plan.empty() ? output_dir / "offset_plan.txt" : plan; }

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? output_dir / "student.odmq" : checkpoint;
}

const std::vector<RunConfig::Key>& RunConfig::keys() {
  static const std::vector<Key> out = [] {
    std::vector<Key> k;
    for (const auto& e : entries()) k.push_back({e.name, e.description});
    return k;
  }();
  return out;
}

}  // namespace odm
