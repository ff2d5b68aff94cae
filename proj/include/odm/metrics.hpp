#pragma once

#include <vector>

#include "odm/tensor.hpp"

namespace odm {

inline constexpr double kPsnrCap = 100.0;

struct QualityScore {
  double psnr_db = 0.0;
  double ssim = 0.0;
};

/// [0, 1] -> [0, 255], clamped and rounded to integers.
Tensor to_pixels(const Tensor& x);

/// Luma 0.299 R + 0.587 G + 0.114 B of sample `n`, with `shave` pixels
/// dropped from every border. Row-major, (H - 2 shave) x (W - 2 shave).
std::vector<double> luma(const Tensor& rgb, int n, int shave, int* height = nullptr, int* width = nullptr);

/// PSNR of two [0, 255] images (sample `n`), capped at 100 dB.
double psnr_pixels(const Tensor& sr, const Tensor& hr, int shave, int n = 0);
/// Gaussian-window SSIM of two [0, 255] images (sample `n`).
double ssim_pixels(const Tensor& sr, const Tensor& hr, int shave, int n = 0);

/// SSIM of two single-channel images, 11x11 Gaussian window with sigma 1.5
/// over valid positions.
double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, int height, int width);

/// Per-sample scores of [0, 1] batches after de-normalization.
std::vector<QualityScore> quality(const Tensor& sr, const Tensor& hr, int shave);
QualityScore mean_quality(const std::vector<QualityScore>& scores);

}  // namespace odm
