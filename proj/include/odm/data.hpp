#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "odm/tensor.hpp"

namespace odm {

enum class Downsample { Box, Bicubic };

std::string to_string(Downsample kind);
Downsample parse_downsample(const std::string& text);

/// Average of each scale x scale block.
Tensor box_downsample(const Tensor& hr, int scale);
/// Antialiased bicubic (a = -0.5) with replicated borders.
Tensor bicubic_downsample(const Tensor& hr, int scale);
Tensor downsample(const Tensor& hr, int scale, Downsample kind);
/// Nearest-neighbour upsampling, used as the trivial SR baseline.
Tensor nearest_upsample(const Tensor& lr, int scale);

/// A batch of LR inputs and the matching HR targets, values in [0, 1].
struct PatchPair {
  Tensor lr;
  Tensor hr;
};

class PatchDataset {
 public:
  PatchDataset() = default;
  /// `hr_patches` are (1, 3, P, P) tensors; LR patches are derived here.
  PatchDataset(int scale, std::vector<Tensor> hr_patches, Downsample kind = Downsample::Box);

  std::size_t size() const { return hr_.size(); }
  bool empty() const { return hr_.empty(); }
  int scale() const { return scale_; }
  const Tensor& lr(std::size_t i) const { return lr_.at(i); }
  const Tensor& hr(std::size_t i) const { return hr_.at(i); }

  PatchPair batch(std::span<const std::size_t> indices) const;
  /// The first `count` patches as one batch.
  PatchPair head(std::size_t count) const;
  /// The first `count` patches of the epoch-0 order under `seed`.
  PatchPair sample(std::uint64_t seed, std::size_t count) const;
  /// Patch order for an epoch: a shuffle seeded with seed ^ epoch.
  std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch) const;
  /// Batches of one epoch; the last one may be short.
  std::vector<PatchPair> epoch_batches(std::uint64_t seed, int epoch, int batch_size) const;

 private:
  int scale_ = 4;
  std::vector<Tensor> lr_;
  std::vector<Tensor> hr_;
};

/// Procedural patches: oriented sinusoids, step edges and smoothed noise.
/// Patch i depends only on (seed, i).
PatchDataset synth_dataset(std::size_t n, int scale, int patch_size, std::uint64_t seed);

/// Random crops (with seeded flips) from every PNG in `dir`, visited in
/// file-name order. Unreadable or too-small images are skipped with a
/// warning.
PatchDataset load_png_dataset(const std::filesystem::path& dir, int scale, int patch_size, std::uint64_t seed,
                              int crops_per_image = 8, Downsample kind = Downsample::Box);

/// 8-bit RGB PNG to a (1, 3, H, W) tensor in [0, 1].
Tensor read_png(const std::filesystem::path& path);
/// (1, 3, H, W) tensor in [0, 1] to an 8-bit RGB PNG. Values are clamped.
void write_png(const std::filesystem::path& path, const Tensor& image);

}  // namespace odm
