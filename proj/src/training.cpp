#include "odm/training.hpp"

#include <cmath>
#include <cstdio>

#include "odm/error.hpp"
#include "odm/random.hpp"

namespace odm {

void LossConfig::validate() const {
  if (!(lambda_skt >= 0.0f) || !std::isfinite(lambda_skt)) throw ConfigError("lambda_skt must be finite and >= 0");
  if (!(lambda_v >= 0.0f) || !std::isfinite(lambda_v)) throw ConfigError("lambda_v must be finite and >= 0");
}

double TrainSchedule::lr_at(int epoch) const { return lr0 * std::pow(0.5, epoch / halve_every); }

void TrainSchedule::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw ConfigError("lr0 must be positive");
  if (halve_every < 1) throw ConfigError("halve_every must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& text) {
  if (text == "sgd") return OptimizerKind::Sgd;
  if (text == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + text + "' (expected sgd or adam)");
}

StepCounts merge_gradients(std::span<const float> grad_r, std::span<const float> grad_v, bool cooperative,
                           std::span<float> out) {
  if (grad_r.size() != grad_v.size() || grad_r.size() != out.size()) {
    throw DimensionError("gradient buffers differ in length");
  }
  StepCounts counts;
  for (std::size_t k = 0; k < grad_r.size(); ++k) {
    const float gr = grad_r[k];
    const float gv = grad_v[k];
    const bool conflict = (gr > 0.0f && gv < 0.0f) || (gr < 0.0f && gv > 0.0f);
    if (gr != 0.0f && gv != 0.0f) ++counts.both_nonzero;
    if (conflict) ++counts.conflicting;
    out[k] = cooperative && conflict ? gr : gr + gv;
  }
  return counts;
}

namespace {

void require_populated(const Parameter& p) {
  if (!p.populated(GradSlot::Reconstruction) || !p.populated(GradSlot::Variance)) {
    throw UsageError("parameter '" + p.name() + "' has no reconstruction and variance gradients to merge");
  }
}

}  // namespace

StepCounts cooperative_step(Parameter& param, float lr, bool cooperative) {
  require_populated(param);
  std::vector<float> merged(param.size());
  const StepCounts counts =
      merge_gradients(param.grad(GradSlot::Reconstruction), param.grad(GradSlot::Variance), cooperative, merged);
  auto values = param.values();
  for (std::size_t k = 0; k < values.size(); ++k) values[k] -= lr * merged[k];
  return counts;
}

StepCounts ParameterUpdater::step(Parameter& param, float lr, bool cooperative) {
  if (kind_ == OptimizerKind::Sgd) return cooperative_step(param, lr, cooperative);
  require_populated(param);
  std::vector<float> merged(param.size());
  const StepCounts counts =
      merge_gradients(param.grad(GradSlot::Reconstruction), param.grad(GradSlot::Variance), cooperative, merged);
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  AdamState& st = adam_[&param];
  if (st.m.empty()) {
    st.m.assign(param.size(), 0.0f);
    st.v.assign(param.size(), 0.0f);
  }
  ++st.t;
  const double c1 = 1.0 - std::pow(beta1, st.t);
  const double c2 = 1.0 - std::pow(beta2, st.t);
  auto values = param.values();
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double g = merged[k];
    st.m[k] = static_cast<float>(beta1 * st.m[k] + (1.0 - beta1) * g);
    st.v[k] = static_cast<float>(beta2 * st.v[k] + (1.0 - beta2) * g * g);
    const double mhat = st.m[k] / c1;
    const double vhat = st.v[k] / c2;
    values[k] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
  }
  return counts;
}

Var variance_loss(Tape& tape, std::span<const Var> taps, float lambda_v) {
  if (taps.empty()) {
    warn("variance loss over an empty tap list is 0");
    return tape.constant(Tensor::scalar(0.0f));
  }
  std::vector<Var> stds;
  stds.reserve(taps.size());
  for (const Var& t : taps) stds.push_back(std_dev(t));
  return mul_scalar(sum_scalars(stds), lambda_v);
}

Var reconstruction_loss(const Var& sr, const Var& hr, const Var& student_struct, const Var& teacher_struct,
                        float lambda_skt) {
  if (sr.shape() != hr.shape()) throw DimensionError("SR " + sr.shape().str() + " vs HR " + hr.shape().str());
  if (student_struct.shape() != teacher_struct.shape()) {
    throw DimensionError("structural features " + student_struct.shape().str() + " vs " + teacher_struct.shape().str());
  }
  const Var l1 = l1_loss(sr, hr);
  if (lambda_skt == 0.0f) return l1;
  const Var skt = mse_loss(normalize_per_sample(student_struct), normalize_per_sample(teacher_struct));
  const Var parts[] = {l1, mul_scalar(skt, lambda_skt)};
  return sum_scalars(parts);
}

namespace {

std::string seed_step(std::uint64_t seed, int step) {
  return " (seed " + std::to_string(seed) + ", step " + std::to_string(step) + ")";
}

}  // namespace

TrainResult train(SRModel& student, const SRModel& teacher, const PatchDataset& data, const TrainOptions& options,
                  std::uint64_t seed, const TrainCallbacks& callbacks) {
  options.loss.validate();
  options.schedule.validate();
  if (data.empty()) throw ConfigError("training dataset is empty");
  if (!student.quantized()) throw UsageError("train() needs a quantized student");
  const LossConfig& loss_cfg = options.loss;
  ParameterUpdater updater(options.optimizer);
  const auto params = student.parameters();
  TrainResult result;
  int step = 0;
  for (int epoch = 0; epoch < options.schedule.epochs; ++epoch) {
    const float lr = static_cast<float>(options.schedule.lr_at(epoch));
    for (const PatchPair& batch : data.epoch_batches(seed, epoch, options.schedule.batch_size)) {
      if (options.max_steps > 0 && step >= options.max_steps) break;
      Tape teacher_tape;
      const Tensor teacher_struct = teacher.evaluate(teacher_tape, batch.lr, /*quantize=*/false).structural.value();

      Tape tape;
      ForwardResult fwd;
      try {
        fwd = student.forward(tape, batch.lr, {true, true});
      } catch (const RangeCollapseError& e) {
        throw NumericError(std::string("training diverged: ") + e.what() + seed_step(seed, step));
      } catch (const ContractViolation& e) {
        throw NumericError(std::string("training diverged: ") + e.what() + seed_step(seed, step));
      }
      const Var loss_r = reconstruction_loss(fwd.sr, tape.constant(batch.hr), fwd.structural,
                                             tape.constant(teacher_struct), loss_cfg.lambda_skt);
      const Var loss_v = variance_loss(tape, fwd.taps, loss_cfg.lambda_v);
      const double lr_value = loss_r.value().item();
      const double lv_value = loss_v.value().item();
      if (!std::isfinite(lr_value) || !std::isfinite(lv_value)) {
        throw NumericError("training loss became non-finite" + seed_step(seed, step));
      }

      for (Parameter* p : params) p->zero_grad();
      if (loss_cfg.variance_reg) {
        const LossRoot roots[] = {{loss_r, GradSlot::Reconstruction}, {loss_v, GradSlot::Variance}};
        tape.backward(roots);
      } else {
        tape.backward(loss_r, GradSlot::Reconstruction);
        for (Parameter* p : params) p->fill_grad(GradSlot::Variance, 0.0f);
      }

      StepCounts counts;
      for (Parameter* p : params) counts += updater.step(*p, lr, loss_cfg.cooperative);
      for (auto& slot : student.slots()) enforce_range_gap(slot.act_range.values());
      for (const Parameter* p : params) {
        for (float v : p->values()) {
          if (!std::isfinite(v)) throw NumericError("parameter '" + p->name() + "' became non-finite" + seed_step(seed, step));
        }
      }

      TelemetryRow row{step, lr_value, lv_value, counts.ratio(), options.schedule.lr_at(epoch), counts.both_nonzero, counts.conflicting};
      result.telemetry.push_back(row);
      if (callbacks.on_step) callbacks.on_step(row);
      result.final_tap_std.clear();
      for (const Var& t : fwd.taps) result.final_tap_std.push_back(population_std(t.value().values()));
      ++step;
    }
    if (callbacks.on_epoch_end) callbacks.on_epoch_end(epoch);
    if (options.max_steps > 0 && step >= options.max_steps) break;
  }
  return result;
}

SRModel prepare_student(const SRModel& teacher, const OffsetPlan& plan, const PatchDataset& data, std::uint64_t seed) {
  return prepare_student(teacher, teacher.config(), plan, data, seed);
}

SRModel prepare_student(const SRModel& teacher, const SRModelConfig& student_config, const OffsetPlan& plan,
                        const PatchDataset& data, std::uint64_t seed) {
  if (data.empty()) throw ConfigError("calibration needs a nonempty dataset");
  const SRModelConfig& t = teacher.config();
  if (student_config.num_blocks != t.num_blocks || student_config.channels != t.channels ||
      student_config.scale != t.scale || student_config.kernel != t.kernel || student_config.use_bn != t.use_bn ||
      student_config.quantize_body_end != t.quantize_body_end) {
    throw ConfigError("student layout differs from the teacher checkpoint");
  }
  SRModel student(student_config, true, seed);
  student.copy_weights_from(teacher);
  if (!plan.empty()) student.install_offsets(plan);
  const PatchPair calib = data.sample(seed, kCalibrationPatches);
  std::vector<Tensor> batches;
  for (int start = 0; start < calib.lr.shape().n; start += 8) {
    batches.push_back(calib.lr.slice_batch(start, std::min(start + 8, calib.lr.shape().n)));
  }
  student.calibrate_activation_ranges(batches);
  if (student.config().freeze_weight_ranges) student.freeze_weight_ranges();
  return student;
}

SRModel pretrain_teacher(const SRModelConfig& config, const PatchDataset& data, int steps, std::uint64_t seed,
                         double lr, int batch_size, const std::function<void(int, double)>& on_step) {
  if (data.empty()) throw ConfigError("pretraining dataset is empty");
  if (steps < 0) throw ConfigError("pretrain steps must be >= 0");
  SRModel teacher(config, false, seed);
  ParameterUpdater adam(OptimizerKind::Adam);
  const auto params = teacher.parameters();
  int step = 0;
  for (int epoch = 0; step < steps; ++epoch) {
    for (const PatchPair& batch : data.epoch_batches(seed, epoch, batch_size)) {
      if (step >= steps) break;
      Tape tape;
      const ForwardResult fwd = teacher.forward(tape, batch.lr, {false, true});
      const Var loss = l1_loss(fwd.sr, tape.constant(batch.hr));
      const double value = loss.value().item();
      if (!std::isfinite(value)) throw NumericError("teacher loss became non-finite" + seed_step(seed, step));
      for (Parameter* p : params) p->zero_grad();
      tape.backward(loss, GradSlot::Reconstruction);
      for (Parameter* p : params) {
        p->fill_grad(GradSlot::Variance, 0.0f);
        adam.step(*p, static_cast<float>(lr), false);
      }
      if (on_step) on_step(step, value);
      ++step;
    }
  }
  return teacher;
}

double evaluate_reconstruction(const SRModel& student, const SRModel& teacher, const PatchPair& batch,
                               float lambda_skt) {
  Tape teacher_tape;
  const Tensor teacher_struct = teacher.evaluate(teacher_tape, batch.lr, false).structural.value();
  Tape tape;
  const ForwardResult fwd = student.evaluate(tape, batch.lr, true);
  return reconstruction_loss(fwd.sr, tape.constant(batch.hr), fwd.structural, tape.constant(teacher_struct), lambda_skt)
      .value()
      .item();
}

std::vector<ConflictStats> conflict_ratio_series(std::span<const TelemetryRow> telemetry) {
  std::vector<ConflictStats> out;
  out.reserve(telemetry.size());
  for (const auto& row : telemetry) {
    out.push_back({row.step, row.conflict_ratio, row.params_total, row.params_conflicting});
  }
  return out;
}

std::string telemetry_csv(std::span<const TelemetryRow> telemetry) {
  std::string out = "step,loss_r,loss_v,conflict_ratio,lr\n";
  char line[160];
  for (const auto& row : telemetry) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.9g\n", row.step, row.loss_r, row.loss_v, row.conflict_ratio,
                  row.lr);
    out += line;
  }
  return out;
}

}  // namespace odm
