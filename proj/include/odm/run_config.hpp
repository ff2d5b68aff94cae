#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "odm/data.hpp"
#include "odm/mismatch.hpp"
#include "odm/model.hpp"
#include "odm/training.hpp"

namespace odm {

/// Everything a pipeline command needs. Defaults are the desk configuration.
struct RunConfig {
  SRModelConfig model;
  TrainOptions train;
  /// Install distribution offsets on the analyzed layers.
  bool offsets = true;
  double p = 0.3;
  TopPRule topp_rule = TopPRule::SharedBudget;
  std::uint64_t seed = 0;

  /// "synthetic" or a directory of PNG images.
  std::string train_data = "synthetic";
  std::size_t train_patches = 800;
  /// Seed of the synthetic training set and of PNG crop positions.
  std::uint64_t data_seed = 1;
  std::string eval_data = "synthetic";
  std::size_t eval_patches = 64;
  std::uint64_t eval_seed = 999;
  int patch_size = 32;
  Downsample downsample = Downsample::Box;
  int crops_per_image = 8;

  int pretrain_steps = 2000;
  double pretrain_lr = 1e-3;

  std::filesystem::path output_dir = "odm_run";
  /// Empty paths fall back to files inside output_dir.
  std::filesystem::path teacher;
  std::filesystem::path plan;
  std::filesystem::path checkpoint;
  bool save_images = false;

  /// Throws ConfigError for unknown keys and unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  /// key=value lines; '#' starts a comment; blank lines are ignored.
  void apply_text(const std::string& text, const std::string& origin = "config");
  void load_file(const std::filesystem::path& path);
  void validate() const;
  /// Every key with its current value, one per line.
  std::string to_text() const;

  std::filesystem::path teacher_path() const;
  std::filesystem::path plan_path() const;
  std::filesystem::path checkpoint_path() const;
  std::filesystem::path telemetry_path() const { return output_dir / "telemetry.csv"; }
  std::filesystem::path report_path() const { return output_dir / "mismatch_report.txt"; }

  struct Key {
    std::string name;
    std::string description;
  };
  static const std::vector<Key>& keys();
};

}  // namespace odm
