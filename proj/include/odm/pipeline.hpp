#pragma once

#include <string>
#include <vector>

#include "odm/complexity.hpp"
#include "odm/metrics.hpp"
#include "odm/run_config.hpp"

namespace odm {

/// Training patches named by config.train_data.
PatchDataset training_set(const RunConfig& config);
/// Evaluation patches named by config.eval_data.
PatchDataset evaluation_set(const RunConfig& config);

/// Trains the full-precision teacher and writes it to teacher_path(), with a
/// "step,loss" log next to it.
SRModel cmd_pretrain(const RunConfig& config);

struct AnalyzeResult {
  std::vector<LayerMismatch> reports;
  OffsetPlan plan;
};

/// Measures the teacher's slot inputs and writes the mismatch report and
/// the offset plan.
AnalyzeResult cmd_analyze(const RunConfig& config);

/// Quantization-aware training of a student built from the teacher and, if
/// offsets are on, the plan file. Writes a checkpoint after every epoch and
/// the telemetry CSV at the end.
TrainResult cmd_train(const RunConfig& config, SRModel* student_out = nullptr);

struct EvalResult {
  std::vector<QualityScore> per_image;
  QualityScore mean;
  /// "image,psnr_db,ssim" rows and a final "mean" row.
  std::string csv() const;
};

/// PSNR/SSIM of checkpoint_path() on the evaluation set; writes eval.csv and
/// optionally the SR images.
EvalResult cmd_eval(const RunConfig& config);

struct ComplexityRequest {
  /// Bit-width for body weights and inputs.
  int bits = 2;
  int out_w = 1920;
  int out_h = 1080;
  /// Offset fraction; 0 disables offsets.
  double offsets_p = 0.0;
};

/// The 16-block, 64-channel, x4 accounting configuration.
SRModelConfig complexity_preset(const std::string& name);

ComplexityReport cmd_complexity(const SRModelConfig& model, const ComplexityRequest& request,
                                TopPRule rule = TopPRule::SharedBudget);

/// "1920x1080" -> (1920, 1080).
std::pair<int, int> parse_resolution(const std::string& text);

}  // namespace odm
