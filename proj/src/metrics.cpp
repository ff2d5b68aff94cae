#include "odm/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "odm/error.hpp"

namespace odm {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = (0.01 * 255.0) * (0.01 * 255.0);
constexpr double kC2 = (0.03 * 255.0) * (0.03 * 255.0);

void check_pair(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("image shapes differ: " + a.shape().str() + " vs " + b.shape().str());
  if (a.shape().c != 3) throw DimensionError("expected RGB images, got " + a.shape().str());
}

std::vector<double> gaussian_window() {
  std::vector<double> g(kWindow * kWindow);
  double total = 0.0;
  const int r = kWindow / 2;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      const double v = std::exp(-(x * x + y * y) / (2.0 * kSigma * kSigma));
      g[static_cast<std::size_t>((y + r) * kWindow + (x + r))] = v;
      total += v;
    }
  for (double& v : g) v /= total;
  return g;
}

}  // namespace

Tensor to_pixels(const Tensor& x) {
  Tensor out = x;
  for (float& v : out.values()) v = static_cast<float>(std::round(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0));
  return out;
}

std::vector<double> luma(const Tensor& rgb, int n, int shave, int* height, int* width) {
  const Shape s = rgb.shape();
  if (s.c != 3) throw DimensionError("luma needs an RGB image, got " + s.str());
  const int h = s.h - 2 * shave;
  const int w = s.w - 2 * shave;
  if (h <= 0 || w <= 0) throw DimensionError("shave " + std::to_string(shave) + " leaves nothing of " + s.str());
  std::vector<double> y(static_cast<std::size_t>(h) * w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      y[static_cast<std::size_t>(i) * w + j] = 0.299 * rgb.at(n, 0, i + shave, j + shave) +
                                               0.587 * rgb.at(n, 1, i + shave, j + shave) +
                                               0.114 * rgb.at(n, 2, i + shave, j + shave);
    }
  if (height != nullptr) *height = h;
  if (width != nullptr) *width = w;
  return y;
}

double psnr_pixels(const Tensor& sr, const Tensor& hr, int shave, int n) {
  check_pair(sr, hr);
  const auto a = luma(sr, n, shave);
  const auto b = luma(hr, n, shave);
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 20.0 * std::log10(255.0 / std::sqrt(mse)));
}

double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, int height, int width) {
  if (height < kWindow || width < kWindow) {
    throw DimensionError("SSIM needs at least " + std::to_string(kWindow) + "x" + std::to_string(kWindow) + " pixels, got " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  static const std::vector<double> g = gaussian_window();
  double total = 0.0;
  int count = 0;
  for (int y = 0; y + kWindow <= height; ++y)
    for (int x = 0; x + kWindow <= width; ++x) {
      double ma = 0.0;
      double mb = 0.0;
      double saa = 0.0;
      double sbb = 0.0;
      double sab = 0.0;
      for (int dy = 0; dy < kWindow; ++dy)
        for (int dx = 0; dx < kWindow; ++dx) {
          const double wgt = g[static_cast<std::size_t>(dy * kWindow + dx)];
          const std::size_t k = static_cast<std::size_t>(y + dy) * width + (x + dx);
          ma += wgt * a[k];
          mb += wgt * b[k];
          saa += wgt * a[k] * a[k];
          sbb += wgt * b[k] * b[k];
          sab += wgt * a[k] * b[k];
        }
      const double va = saa - ma * ma;
      const double vb = sbb - mb * mb;
      const double cov = sab - ma * mb;
      total += ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
      ++count;
    }
  return total / count;
}

double ssim_pixels(const Tensor& sr, const Tensor& hr, int shave, int n) {
  check_pair(sr, hr);
  int h = 0;
  int w = 0;
  const auto a = luma(sr, n, shave, &h, &w);
  const auto b = luma(hr, n, shave);
  return ssim_plane(a, b, h, w);
}

std::vector<QualityScore> quality(const Tensor& sr, const Tensor& hr, int shave) {
  check_pair(sr, hr);
  const Tensor a = to_pixels(sr);
  const Tensor b = to_pixels(hr);
  std::vector<QualityScore> out;
  for (int n = 0; n < sr.shape().n; ++n) out.push_back({psnr_pixels(a, b, shave, n), ssim_pixels(a, b, shave, n)});
  return out;
}

QualityScore mean_quality(const std::vector<QualityScore>& scores) {
  if (scores.empty()) throw UsageError("mean of no quality scores");
  QualityScore m;
  for (const auto& s : scores) {
    m.psnr_db += s.psnr_db;
    m.ssim += s.ssim;
  }
  m.psnr_db /= static_cast<double>(scores.size());
  m.ssim /= static_cast<double>(scores.size());
  return m;
}

}  // namespace odm
