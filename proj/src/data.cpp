#include "odm/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "odm/error.hpp"
#include "odm/random.hpp"

namespace odm {

std::string to_string(Downsample kind) { return kind == Downsample::Box ? "box" : "bicubic"; }

Downsample parse_downsample(const std::string& text) {
  if (text == "box") return Downsample::Box;
  if (text == "bicubic") return Downsample::Bicubic;
  throw ConfigError("unknown downsampling kernel '" + text + "' (expected box or bicubic)");
}

namespace {

void check_divisible(const Tensor& hr, int scale) {
  const Shape s = hr.shape();
  if (scale < 1 || s.h % scale != 0 || s.w % scale != 0) {
    throw DimensionError("HR shape " + s.str() + " is not divisible by scale " + std::to_string(scale));
  }
}

double cubic(double x) {
  constexpr double a = -0.5;
  x = std::fabs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

struct Taps {
  std::vector<int> index;
  std::vector<double> weight;
};

/// Per output position, the input indices and normalized weights.
std::vector<Taps> bicubic_taps(int in, int out, int scale) {
  std::vector<Taps> taps(static_cast<std::size_t>(out));
  const double support = 2.0 * scale;
  for (int o = 0; o < out; ++o) {
    const double center = (o + 0.5) * scale - 0.5;
    const int lo = static_cast<int>(std::floor(center - support));
    const int hi = static_cast<int>(std::ceil(center + support));
    Taps& t = taps[static_cast<std::size_t>(o)];
    double total = 0.0;
    for (int j = lo; j <= hi; ++j) {
      const double w = cubic((center - j) / scale);
      if (w == 0.0) continue;
      t.index.push_back(std::clamp(j, 0, in - 1));
      t.weight.push_back(w);
      total += w;
    }
    for (double& w : t.weight) w /= total;
  }
  return taps;
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t i) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (i + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Tensor synth_patch(int p, Rng& rng) {
  Tensor t({1, 3, p, p});
  std::vector<double> img(static_cast<std::size_t>(3 * p * p));
  for (int c = 0; c < 3; ++c) {
    const double base = rng.uniform(0.25, 0.75);
    for (int i = 0; i < p * p; ++i) img[static_cast<std::size_t>(c * p * p + i)] = base;
  }
  const int waves = 1 + static_cast<int>(rng.below(3));
  for (int k = 0; k < waves; ++k) {
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double freq = rng.uniform(0.02, 0.12);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double amp[3];
    for (double& a : amp) a = rng.uniform(-0.2, 0.2);
    const double fx = std::cos(theta) * freq * 2.0 * std::numbers::pi;
    const double fy = std::sin(theta) * freq * 2.0 * std::numbers::pi;
    for (int y = 0; y < p; ++y)
      for (int x = 0; x < p; ++x) {
        const double v = std::sin(fx * x + fy * y + phase);
        for (int c = 0; c < 3; ++c) img[static_cast<std::size_t>((c * p + y) * p + x)] += amp[c] * v;
      }
  }
  const int edges = static_cast<int>(rng.below(3));
  for (int k = 0; k < edges; ++k) {
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double nx = std::cos(theta);
    const double ny = std::sin(theta);
    const double offset = rng.uniform(0.25, 0.75) * p;
    double delta[3];
    for (double& d : delta) d = rng.uniform(-0.3, 0.3);
    for (int y = 0; y < p; ++y)
      for (int x = 0; x < p; ++x) {
        if ((x - p / 2.0) * nx + (y - p / 2.0) * ny + p / 2.0 < offset) continue;
        for (int c = 0; c < 3; ++c) img[static_cast<std::size_t>((c * p + y) * p + x)] += delta[c];
      }
  }
  // 3x3 box-smoothed Gaussian noise
  const double noise_amp = rng.uniform(0.0, 0.08);
  std::vector<double> noise(static_cast<std::size_t>(p * p));
  for (double& v : noise) v = rng.normal();
  for (int y = 0; y < p; ++y)
    for (int x = 0; x < p; ++x) {
      double acc = 0.0;
      int count = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy;
          const int xx = x + dx;
          if (yy < 0 || yy >= p || xx < 0 || xx >= p) continue;
          acc += noise[static_cast<std::size_t>(yy * p + xx)];
          ++count;
        }
      for (int c = 0; c < 3; ++c) img[static_cast<std::size_t>((c * p + y) * p + x)] += noise_amp * acc / count;
    }
  for (std::size_t i = 0; i < img.size(); ++i) t[i] = static_cast<float>(std::clamp(img[i], 0.0, 1.0));
  return t;
}

}  // namespace

Tensor box_downsample(const Tensor& hr, int scale) {
  check_divisible(hr, scale);
  const Shape s = hr.shape();
  Tensor out({s.n, s.c, s.h / scale, s.w / scale});
  const double inv = 1.0 / (scale * scale);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h / scale; ++y)
        for (int x = 0; x < s.w / scale; ++x) {
          double acc = 0.0;
          for (int dy = 0; dy < scale; ++dy)
            for (int dx = 0; dx < scale; ++dx) acc += hr.at(n, c, y * scale + dy, x * scale + dx);
          out.at(n, c, y, x) = static_cast<float>(acc * inv);
        }
  return out;
}

Tensor bicubic_downsample(const Tensor& hr, int scale) {
  check_divisible(hr, scale);
  const Shape s = hr.shape();
  const int oh = s.h / scale;
  const int ow = s.w / scale;
  const auto ty = bicubic_taps(s.h, oh, scale);
  const auto tx = bicubic_taps(s.w, ow, scale);
  Tensor out({s.n, s.c, oh, ow});
  std::vector<double> rows(static_cast<std::size_t>(oh) * s.w);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < oh; ++y) {
        const Taps& t = ty[static_cast<std::size_t>(y)];
        for (int x = 0; x < s.w; ++x) {
          double acc = 0.0;
          for (std::size_t k = 0; k < t.index.size(); ++k) acc += t.weight[k] * hr.at(n, c, t.index[k], x);
          rows[static_cast<std::size_t>(y) * s.w + x] = acc;
        }
      }
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          const Taps& t = tx[static_cast<std::size_t>(x)];
          double acc = 0.0;
          for (std::size_t k = 0; k < t.index.size(); ++k) {
            acc += t.weight[k] * rows[static_cast<std::size_t>(y) * s.w + t.index[k]];
          }
          out.at(n, c, y, x) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
        }
    }
  return out;
}

Tensor downsample(const Tensor& hr, int scale, Downsample kind) {
  return kind == Downsample::Box ? box_downsample(hr, scale) : bicubic_downsample(hr, scale);
}

Tensor nearest_upsample(const Tensor& lr, int scale) {
  const Shape s = lr.shape();
  Tensor out({s.n, s.c, s.h * scale, s.w * scale});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h * scale; ++y)
        for (int x = 0; x < s.w * scale; ++x) out.at(n, c, y, x) = lr.at(n, c, y / scale, x / scale);
  return out;
}

PatchDataset::PatchDataset(int scale, std::vector<Tensor> hr_patches, Downsample kind)
    : scale_(scale), hr_(std::move(hr_patches)) {
  lr_.reserve(hr_.size());
  for (const Tensor& h : hr_) {
    if (h.shape().n != 1 || h.shape().c != 3) throw DimensionError("HR patch must be (1, 3, H, W), got " + h.shape().str());
    if (h.shape() != hr_.front().shape()) throw DimensionError("HR patches must share one shape");
    lr_.push_back(downsample(h, scale, kind));
  }
}

PatchPair PatchDataset::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw UsageError("empty batch");
  std::vector<Tensor> lr;
  std::vector<Tensor> hr;
  for (std::size_t i : indices) {
    lr.push_back(lr_.at(i));
    hr.push_back(hr_.at(i));
  }
  return {Tensor::concat_batch(lr), Tensor::concat_batch(hr)};
}

PatchPair PatchDataset::head(std::size_t count) const {
  count = std::min(count, size());
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = i;
  return batch(idx);
}

PatchPair PatchDataset::sample(std::uint64_t seed, std::size_t count) const {
  auto order = epoch_order(seed, 0);
  order.resize(std::min(count, order.size()));
  return batch(order);
}

std::vector<std::size_t> PatchDataset::epoch_order(std::uint64_t seed, int epoch) const {
  std::vector<std::size_t> order(size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed ^ static_cast<std::uint64_t>(epoch));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

std::vector<PatchPair> PatchDataset::epoch_batches(std::uint64_t seed, int epoch, int batch_size) const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (empty()) throw ConfigError("dataset is empty");
  const auto order = epoch_order(seed, epoch);
  std::vector<PatchPair> out;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    out.push_back(batch(std::span<const std::size_t>(order.data() + start, end - start)));
  }
  return out;
}

PatchDataset synth_dataset(std::size_t n, int scale, int patch_size, std::uint64_t seed) {
  if (n < 1) throw ConfigError("synthetic dataset needs n >= 1");
  if (patch_size < scale || patch_size % scale != 0) {
    throw ConfigError("patch_size " + std::to_string(patch_size) + " must be a multiple of scale " + std::to_string(scale));
  }
  std::vector<Tensor> hr;
  hr.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix(seed, i));
    hr.push_back(synth_patch(patch_size, rng));
  }
  return PatchDataset(scale, std::move(hr), Downsample::Box);
}

PatchDataset load_png_dataset(const std::filesystem::path& dir, int scale, int patch_size, std::uint64_t seed,
                              int crops_per_image, Downsample kind) {
  if (patch_size < scale || patch_size % scale != 0) {
    throw ConfigError("patch_size " + std::to_string(patch_size) + " must be a multiple of scale " + std::to_string(scale));
  }
  if (!std::filesystem::is_directory(dir)) throw ConfigError("dataset directory " + dir.string() + " does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (entry.is_regular_file() && ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  Rng rng(seed);
  std::vector<Tensor> crops;
  for (const auto& file : files) {
    Tensor img;
    try {
      img = read_png(file);
    } catch (const Error& e) {
      warn("skipping " + file.string() + ": " + e.what());
      continue;
    }
    const Shape s = img.shape();
    if (s.h < patch_size || s.w < patch_size) {
      warn("skipping " + file.string() + ": smaller than patch size " + std::to_string(patch_size));
      continue;
    }
    for (int k = 0; k < crops_per_image; ++k) {
      const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.h - patch_size + 1)));
      const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.w - patch_size + 1)));
      const bool flip_h = rng.below(2) == 1;
      const bool flip_v = rng.below(2) == 1;
      Tensor crop({1, 3, patch_size, patch_size});
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < patch_size; ++y)
          for (int x = 0; x < patch_size; ++x) {
            const int sy = y0 + (flip_v ? patch_size - 1 - y : y);
            const int sx = x0 + (flip_h ? patch_size - 1 - x : x);
            crop.at(0, c, y, x) = img.at(0, c, sy, sx);
          }
      crops.push_back(std::move(crop));
    }
  }
  if (crops.empty()) throw ConfigError("no usable PNG images in " + dir.string());
  return PatchDataset(scale, std::move(crops), kind);
}

Tensor read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&image, path.string().c_str()) == 0) {
    throw FormatError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr) == 0) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("cannot decode PNG " + path.string() + ": " + msg);
  }
  const int h = static_cast<int>(image.height);
  const int w = static_cast<int>(image.width);
  Tensor out({1, 3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        out.at(0, c, y, x) = static_cast<float>(buffer[static_cast<std::size_t>((y * w + x) * 3 + c)]) / 255.0f;
      }
  return out;
}

void write_png(const std::filesystem::path& path, const Tensor& image) {
  const Shape s = image.shape();
  if (s.n != 1 || s.c != 3) throw DimensionError("write_png expects (1, 3, H, W), got " + s.str());
  std::vector<png_byte> buffer(static_cast<std::size_t>(s.h) * s.w * 3);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(image.at(0, c, y, x)), 0.0, 1.0);
        buffer[static_cast<std::size_t>((y * s.w + x) * 3 + c)] = static_cast<png_byte>(std::lround(v * 255.0));
      }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(s.w);
  out.height = static_cast<png_uint_32>(s.h);
  out.format = PNG_FORMAT_RGB;
  if (png_image_write_to_file(&out, path.string().c_str(), 0, buffer.data(), 0, nullptr) == 0) {
    throw FormatError("cannot write PNG " + path.string() + ": " + out.message);
  }
}

}  // namespace odm
