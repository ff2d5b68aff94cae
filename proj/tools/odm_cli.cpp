#include <cstdio>
#include <map>
#include <set>
#include <string>

#include <CLI11.hpp>

#include "odm/checkpoint.hpp"
#include "odm/error.hpp"
#include "odm/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

/// Config-file path plus one --<key> option per config key.
struct ConfigOptions {
  std::string file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  /// Keys in `skip` are shadowed by a subcommand option of the same name.
  void attach(CLI::App* cmd, const std::set<std::string>& skip = {}) {
    cmd->add_option("--config", file, "key=value config file ('#' comments)");
    const odm::RunConfig defaults;
    for (const auto& key : odm::RunConfig::keys()) {
      if (skip.contains(key.name)) continue;
      options[key.name] = cmd->add_option("--" + key.name, values[key.name], key.description)
                              ->type_name("VALUE")
                              ->default_str(defaults.get(key.name))
                              ->group("Config keys");
    }
  }

  odm::RunConfig resolve() const {
    odm::RunConfig config;
    if (!file.empty()) config.load_file(file);
    for (const auto& [name, opt] : options) {
      if (opt->count() > 0) config.set(name, values.at(name));
    }
    return config;
  }
};

double parse_offsets_arg(const std::string& text) {
  const std::string prefix = "p=";
  const std::string value = text.starts_with(prefix) ? text.substr(prefix.size()) : text;
  try {
    std::size_t used = 0;
    const double p = std::stod(value, &used);
    if (used != value.size() || !(p > 0.0 && p <= 1.0)) throw std::invalid_argument(text);
    return p;
  } catch (const std::logic_error&) {
    throw odm::ConfigError("bad --offsets value '" + text + "' (expected p=<fraction in (0, 1]>)");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-bit quantization-aware training for super-resolution networks with distribution offsets"};
  app.require_subcommand(1);

  ConfigOptions pretrain_opts;
  ConfigOptions analyze_opts;
  ConfigOptions train_opts;
  ConfigOptions eval_opts;
  ConfigOptions complexity_opts;

  CLI::App* pretrain = app.add_subcommand("pretrain", "train the full-precision teacher");
  pretrain_opts.attach(pretrain);

  CLI::App* analyze = app.add_subcommand("analyze", "measure per-layer mismatch and write the offset plan");
  analyze_opts.attach(analyze);

  CLI::App* train = app.add_subcommand("train", "quantization-aware training of the low-bit student");
  bool no_coop = false;
  bool no_var_reg = false;
  bool no_offsets = false;
  train->add_flag("--no-coop", no_coop, "apply variance gradients everywhere");
  train->add_flag("--no-var-reg", no_var_reg, "disable the variance regularizer");
  train->add_flag("--no-offsets", no_offsets, "train without shift/scale offsets");
  train_opts.attach(train);

  CLI::App* eval = app.add_subcommand("eval", "PSNR/SSIM of a checkpoint on the evaluation set");
  eval_opts.attach(eval);

  CLI::App* complexity = app.add_subcommand("complexity", "storage and BitOPs accounting");
  std::string preset;
  int bits = 0;
  std::string resolution = "1920x1080";
  std::string offsets;
  std::string csv_path;
  complexity->add_option("--preset", preset, "edsr-baseline or desk (default: model keys)");
  CLI::Option* bits_opt = complexity->add_option("--bits", bits, "bit-width of body weights and inputs (32 = float)");
  complexity->add_option("--resolution", resolution, "output resolution WxH")->capture_default_str();
  complexity->add_option("--offsets", offsets, "offset fraction, e.g. p=0.3");
  complexity->add_option("--csv", csv_path, "also write the report as CSV");
  complexity_opts.attach(complexity, {"offsets"});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (pretrain->parsed()) {
      const odm::RunConfig config = pretrain_opts.resolve();
      odm::cmd_pretrain(config);
      std::printf("teacher written to %s\n", config.teacher_path().string().c_str());
    } else if (analyze->parsed()) {
      const odm::RunConfig config = analyze_opts.resolve();
      const odm::AnalyzeResult r = odm::cmd_analyze(config);
      std::fputs(odm::format_mismatch_report(r.reports, r.plan).c_str(), stdout);
      std::printf("plan written to %s\n", config.plan_path().string().c_str());
    } else if (train->parsed()) {
      odm::RunConfig config = train_opts.resolve();
      if (no_coop) config.train.loss.cooperative = false;
      if (no_var_reg) config.train.loss.variance_reg = false;
      if (no_offsets) config.offsets = false;
      const odm::TrainResult r = odm::cmd_train(config);
      if (!r.telemetry.empty()) {
        const auto& last = r.telemetry.back();
        std::printf("steps %d  loss_r %.6f  loss_v %.6f\n", last.step + 1, last.loss_r, last.loss_v);
      }
      std::printf("student written to %s\n", config.checkpoint_path().string().c_str());
    } else if (eval->parsed()) {
      const odm::RunConfig config = eval_opts.resolve();
      const odm::EvalResult r = odm::cmd_eval(config);
      std::printf("images %zu  psnr %.4f dB  ssim %.4f\n", r.per_image.size(), r.mean.psnr_db, r.mean.ssim);
    } else if (complexity->parsed()) {
      const odm::RunConfig config = complexity_opts.resolve();
      const odm::SRModelConfig model = preset.empty() ? config.model : odm::complexity_preset(preset);
      odm::ComplexityRequest request;
      request.bits = bits_opt->count() > 0 ? bits : model.weight_bits;
      std::tie(request.out_w, request.out_h) = odm::parse_resolution(resolution);
      if (!offsets.empty()) request.offsets_p = parse_offsets_arg(offsets);
      const odm::ComplexityReport report = odm::cmd_complexity(model, request, config.topp_rule);
      std::fputs(report.table().c_str(), stdout);
      std::printf("storage %.3fK  bitops %.4fT\n", report.storage_k(), report.bitops_t());
      if (!csv_path.empty()) odm::write_file_atomic(csv_path, report.csv());
    }
  } catch (const odm::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}
