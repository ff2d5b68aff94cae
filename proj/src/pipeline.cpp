#include "odm/pipeline.hpp"

#include <cstdio>
#include <filesystem>

#include "odm/checkpoint.hpp"
#include "odm/error.hpp"

namespace odm {

namespace {

PatchDataset load_set(const std::string& source, std::size_t patches, std::uint64_t seed, const RunConfig& config) {
  if (source == "synthetic") return synth_dataset(patches, config.model.scale, config.patch_size, seed);
  return load_png_dataset(source, config.model.scale, config.patch_size, seed, config.crops_per_image,
                          config.downsample);
}

std::string fmt_row(const char* pattern, auto... args) {
  char line[256];
  std::snprintf(line, sizeof line, pattern, args...);
  return line;
}

}  // namespace

PatchDataset training_set(const RunConfig& config) {
  return load_set(config.train_data, config.train_patches, config.data_seed, config);
}

PatchDataset evaluation_set(const RunConfig& config) {
  return load_set(config.eval_data, config.eval_patches, config.eval_seed, config);
}

SRModel cmd_pretrain(const RunConfig& config) {
  config.validate();
  const PatchDataset data = training_set(config);
  SRModelConfig model = config.model;
  std::string log = "step,loss\n";
  SRModel teacher = pretrain_teacher(model, data, config.pretrain_steps, config.seed, config.pretrain_lr,
                                     config.train.schedule.batch_size,
                                     [&](int step, double loss) { log += fmt_row("%d,%.9g\n", step, loss); });
  save_checkpoint(config.teacher_path(), teacher);
  write_file_atomic(config.output_dir / "pretrain_log.csv", log);
  return teacher;
}

AnalyzeResult cmd_analyze(const RunConfig& config) {
  config.validate();
  const SRModel teacher = load_checkpoint(config.teacher_path());
  if (teacher.quantized()) throw ConfigError(config.teacher_path().string() + " is a quantized checkpoint, not a teacher");
  const PatchDataset data = training_set(config);
  AnalyzeResult out;
  out.reports = collect_mismatch(teacher, data.sample(config.seed, kMismatchPatches).lr);
  out.plan = select_offset_layers(out.reports, config.p, config.topp_rule);
  write_file_atomic(config.report_path(), format_mismatch_report(out.reports, out.plan));
  write_file_atomic(config.plan_path(), out.plan.to_text());
  return out;
}

TrainResult cmd_train(const RunConfig& config, SRModel* student_out) {
  config.validate();
  const SRModel teacher = load_checkpoint(config.teacher_path());
  if (teacher.quantized()) throw ConfigError(config.teacher_path().string() + " is a quantized checkpoint, not a teacher");
  OffsetPlan plan;
  if (config.offsets) {
    if (!std::filesystem::exists(config.plan_path())) {
      throw ConfigError("no offset plan at " + config.plan_path().string() + " (run analyze or set offsets=false)");
    }
    plan = OffsetPlan::from_text(read_file(config.plan_path()));
  }
  const PatchDataset data = training_set(config);

  SRModelConfig student_config = teacher.config();
  student_config.weight_bits = config.model.weight_bits;
  student_config.act_bits = config.model.act_bits;
  student_config.freeze_weight_ranges = config.model.freeze_weight_ranges;
  student_config.percentile_j = config.model.percentile_j;
  SRModel student = prepare_student(teacher, student_config, plan, data, config.seed);

  TrainCallbacks callbacks;
  callbacks.on_epoch_end = [&](int) { save_checkpoint(config.checkpoint_path(), student); };
  TrainResult result = train(student, teacher, data, config.train, config.seed, callbacks);
  save_checkpoint(config.checkpoint_path(), student);
  write_file_atomic(config.telemetry_path(), telemetry_csv(result.telemetry));
  if (student_out != nullptr) *student_out = std::move(student);
  return result;
}

std::string EvalResult::csv() const {
  std::string out = "image,psnr_db,ssim\n";
  for (std::size_t i = 0; i < per_image.size(); ++i) {
    out += fmt_row("%zu,%.6f,%.6f\n", i, per_image[i].psnr_db, per_image[i].ssim);
  }
  out += fmt_row("mean,%.6f,%.6f\n", mean.psnr_db, mean.ssim);
  return out;
}

EvalResult cmd_eval(const RunConfig& config) {
  config.validate();
  const SRModel model = load_checkpoint(config.checkpoint_path());
  const PatchDataset data = evaluation_set(config);
  if (data.scale() != model.config().scale) throw ConfigError("evaluation scale differs from the checkpoint scale");
  EvalResult out;
  const int batch = 16;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(data.size(), start + batch); ++i) idx.push_back(i);
    const PatchPair pair = data.batch(idx);
    const Tensor sr = model.predict(pair.lr);
    for (const QualityScore& q : quality(sr, pair.hr, data.scale())) out.per_image.push_back(q);
    if (config.save_images) {
      for (int n = 0; n < sr.shape().n; ++n) {
        write_png(config.output_dir / "sr" / fmt_row("%04zu.png", start + static_cast<std::size_t>(n)),
                  sr.slice_batch(n, n + 1));
      }
    }
  }
  out.mean = mean_quality(out.per_image);
  write_file_atomic(config.output_dir / "eval.csv", out.csv());
  return out;
}

SRModelConfig complexity_preset(const std::string& name) {
  if (name == "edsr-baseline") return SRModelConfig::edsr_baseline();
  if (name == "desk") return SRModelConfig{};
  throw ConfigError("unknown preset '" + name + "' (expected edsr-baseline or desk)");
}

ComplexityReport cmd_complexity(const SRModelConfig& model, const ComplexityRequest& request, TopPRule rule) {
  SRModelConfig config = model;
  config.weight_bits = request.bits;
  config.act_bits = request.bits;
  config.validate();
  const OffsetPlan plan =
      request.offsets_p > 0.0 ? accounting_offset_plan(config.slot_count(), request.offsets_p, rule) : OffsetPlan{};
  return complexity_report(config, BitAssignment::for_model(config, plan), plan, request.out_w, request.out_h);
}

std::pair<int, int> parse_resolution(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    std::size_t used_w = 0;
    std::size_t used_h = 0;
    const int w = std::stoi(text.substr(0, x), &used_w);
    const int h = std::stoi(text.substr(x + 1), &used_h);
    if (used_w != x || used_h != text.size() - x - 1 || w <= 0 || h <= 0) throw std::invalid_argument(text);
    return {w, h};
  } catch (const std::logic_error&) {
    throw ConfigError("bad resolution '" + text + "' (expected WxH)");
  }
}

}  // namespace odm
