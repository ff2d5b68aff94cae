#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "odm/data.hpp"
#include "odm/model.hpp"
#include "odm/tape.hpp"

namespace odm {

struct LossConfig {
  float lambda_skt = 1000.0f;
  float lambda_v = 1e-4f;
  bool cooperative = true;
  bool variance_reg = true;

  void validate() const;
};

struct TrainSchedule {
  int epochs = 6;
  double lr0 = 1e-4;
  int halve_every = 2;
  int batch_size = 8;

  /// lr0 * 0.5^floor(epoch / halve_every).
  double lr_at(int epoch) const;
  void validate() const;
};

enum class OptimizerKind { Sgd, Adam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& text);

/// Sign-agreement counts of one update.
struct StepCounts {
  /// Coordinates where both gradients are nonzero.
  std::size_t both_nonzero = 0;
  /// Coordinates where the gradients have opposite signs.
  std::size_t conflicting = 0;

  StepCounts& operator+=(const StepCounts& o) {
    both_nonzero += o.both_nonzero;
    conflicting += o.conflicting;
    return *this;
  }
  double ratio() const {
    return both_nonzero == 0 ? 0.0 : static_cast<double>(conflicting) / static_cast<double>(both_nonzero);
  }
};

struct ConflictStats {
  int step = 0;
  double conflict_ratio = 0.0;
  std::size_t params_total = 0;
  std::size_t params_conflicting = 0;
};

/// Writes the merged update direction into `out`: grad_r alone where the
/// signs disagree and `cooperative` is set, grad_r + grad_v otherwise.
StepCounts merge_gradients(std::span<const float> grad_r, std::span<const float> grad_v, bool cooperative,
                           std::span<float> out);

/// Plain gradient step on the merged direction. Both gradient slots must be
/// populated.
StepCounts cooperative_step(Parameter& param, float lr, bool cooperative);

/// Applies merged-gradient updates, either as SGD or through Adam moments.
class ParameterUpdater {
 public:
  explicit ParameterUpdater(OptimizerKind kind = OptimizerKind::Sgd) : kind_(kind) {}
  StepCounts step(Parameter& param, float lr, bool cooperative);

 private:
  struct AdamState {
    std::vector<float> m;
    std::vector<float> v;
    int t = 0;
  };
  OptimizerKind kind_;
  std::map<const Parameter*, AdamState> adam_;
};

/// lambda_v * sum of the population std of every tap.
Var variance_loss(Tape& tape, std::span<const Var> taps, float lambda_v);

/// L1(sr, hr) + lambda_skt * MSE of the per-sample L2-normalized structural
/// features.
Var reconstruction_loss(const Var& sr, const Var& hr, const Var& student_struct, const Var& teacher_struct,
                        float lambda_skt);

struct TrainOptions {
  LossConfig loss;
  TrainSchedule schedule;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  /// Stop after this many steps; 0 runs the full schedule.
  int max_steps = 0;
};

struct TelemetryRow {
  int step = 0;
  double loss_r = 0.0;
  double loss_v = 0.0;
  double conflict_ratio = 0.0;
  double lr = 0.0;
  std::size_t params_total = 0;
  std::size_t params_conflicting = 0;
};

struct TrainResult {
  std::vector<TelemetryRow> telemetry;
  /// Population std of every tap at the last step.
  std::vector<double> final_tap_std;
};

struct TrainCallbacks {
  std::function<void(const TelemetryRow&)> on_step;
  std::function<void(int epoch)> on_epoch_end;
};

/// Quantization-aware training of `student` against the frozen teacher.
TrainResult train(SRModel& student, const SRModel& teacher, const PatchDataset& data, const TrainOptions& options,
                  std::uint64_t seed, const TrainCallbacks& callbacks = {});

/// Number of calibration patches used for activation-range initialization.
inline constexpr std::size_t kCalibrationPatches = 16;
/// Patches in the mismatch-analysis batch.
inline constexpr std::size_t kMismatchPatches = 8;

/// Quantized copy of the teacher: weights copied, offsets installed from
/// `plan` (may be empty) and activation ranges percentile-initialized.
SRModel prepare_student(const SRModel& teacher, const OffsetPlan& plan, const PatchDataset& data, std::uint64_t seed);
/// Same, with quantization settings taken from `student_config`; its layout
/// must match the teacher's.
SRModel prepare_student(const SRModel& teacher, const SRModelConfig& student_config, const OffsetPlan& plan,
                        const PatchDataset& data, std::uint64_t seed);

/// Full-precision training with L1 loss and Adam.
SRModel pretrain_teacher(const SRModelConfig& config, const PatchDataset& data, int steps, std::uint64_t seed,
                         double lr = 1e-3, int batch_size = 8,
                         const std::function<void(int step, double loss)>& on_step = {});

/// L_R of the student on one batch, without updating anything.
double evaluate_reconstruction(const SRModel& student, const SRModel& teacher, const PatchPair& batch,
                               float lambda_skt);

std::vector<ConflictStats> conflict_ratio_series(std::span<const TelemetryRow> telemetry);

/// "step,loss_r,loss_v,conflict_ratio,lr" header plus one row per step.
std::string telemetry_csv(std::span<const TelemetryRow> telemetry);

}  // namespace odm
