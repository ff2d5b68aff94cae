#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "odm/error.hpp"
#include "odm/pipeline.hpp"

namespace py = pybind11;
using namespace odm;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor image_batch(const FloatArray& a) {
  if (a.ndim() != 4) throw DimensionError("expected an (N, C, H, W) array");
  const Shape s{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)),
                static_cast<int>(a.shape(3))};
  return Tensor(s, std::vector<float>(a.data(), a.data() + a.size()));
}

py::dict telemetry_row(const TelemetryRow& r) {
  py::dict d;
  d["step"] = r.step;
  d["loss_r"] = r.loss_r;
  d["loss_v"] = r.loss_v;
  d["conflict_ratio"] = r.conflict_ratio;
  d["lr"] = r.lr;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "C++ core of odmq";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<AccountingError>(m, "AccountingError", base.ptr());

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def(py::init([](const py::kwargs& kw) {
        RunConfig c;
        for (const auto& [k, v] : kw) c.set(py::str(k), py::str(v));
        return c;
      }))
      .def("set", &RunConfig::set, py::arg("key"), py::arg("value"))
      .def("get", &RunConfig::get, py::arg("key"))
      .def("apply_text", &RunConfig::apply_text, py::arg("text"), py::arg("origin") = "<text>")
      .def("load_file", [](RunConfig& c, const std::string& path) { c.load_file(path); })
      .def("validate", &RunConfig::validate)
      .def("to_text", &RunConfig::to_text)
      .def_static("keys", [] {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& k : RunConfig::keys()) out.emplace_back(k.name, k.description);
        return out;
      })
      .def("__repr__", [](const RunConfig& c) { return "RunConfig(output_dir=" + c.get("output_dir") + ")"; });

  m.def("pretrain", [](const RunConfig& c) { cmd_pretrain(c); }, py::arg("config"),
        py::call_guard<py::gil_scoped_release>(), "Train the full-precision teacher and save it.");

  m.def("analyze", [](const RunConfig& c) {
        AnalyzeResult r;
        {
          py::gil_scoped_release release;
          r = cmd_analyze(c);
        }
        py::list reports;
        for (const auto& l : r.reports) reports.append(py::make_tuple(l.layer_id, l.m_mu, l.m_sigma));
        py::dict d;
        d["reports"] = reports;
        d["shift_layers"] = r.plan.shift_layers;
        d["scale_layers"] = r.plan.scale_layers;
        return d;
      },
      py::arg("config"), "Measure per-layer mismatch and write the offset plan.");

  m.def("train", [](const RunConfig& c) {
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = cmd_train(c);
        }
        py::list rows;
        for (const auto& row : r.telemetry) rows.append(telemetry_row(row));
        return rows;
      },
      py::arg("config"), "Quantization-aware training; returns the telemetry rows.");

  m.def("evaluate", [](const RunConfig& c) {
        EvalResult r;
        {
          py::gil_scoped_release release;
          r = cmd_eval(c);
        }
        std::vector<std::pair<double, double>> per_image;
        for (const auto& q : r.per_image) per_image.emplace_back(q.psnr_db, q.ssim);
        py::dict d;
        d["psnr_db"] = r.mean.psnr_db;
        d["ssim"] = r.mean.ssim;
        d["per_image"] = per_image;
        return d;
      },
      py::arg("config"));

  m.def("complexity", [](const std::string& preset, int bits, int width, int height, double offsets_p) {
        const ComplexityReport r = cmd_complexity(complexity_preset(preset), {bits, width, height, offsets_p});
        py::list layers;
        for (const auto& l : r.layers) {
          py::dict d;
          d["layer"] = l.layer;
          d["params"] = l.params;
          d["storage_bits"] = l.storage_bits;
          d["macs"] = l.macs;
          d["bitops"] = l.bitops;
          layers.append(d);
        }
        py::dict d;
        d["layers"] = layers;
        d["params_k"] = r.params_k();
        d["storage_k"] = r.storage_k();
        d["macs"] = r.macs();
        d["bitops_t"] = r.bitops_t();
        d["csv"] = r.csv();
        return d;
      },
      py::arg("preset") = "edsr-baseline", py::arg("bits") = 2, py::arg("width") = 1920, py::arg("height") = 1080,
      py::arg("offsets_p") = 0.0);

  m.def("fake_quantize", [](const FloatArray& x, float alpha_l, float alpha_u, int bits) {
        const QuantParams p{alpha_l, alpha_u, bits};
        py::array_t<float> out(std::vector<py::ssize_t>(x.shape(), x.shape() + x.ndim()));
        float* dst = out.mutable_data();
        for (py::ssize_t i = 0; i < x.size(); ++i) dst[i] = fake_quantize_value(x.data()[i], p);
        return out;
      },
      py::arg("x"), py::arg("alpha_l"), py::arg("alpha_u"), py::arg("bits"));

  m.def("quality", [](const FloatArray& sr, const FloatArray& hr, int shave) {
        std::vector<std::pair<double, double>> out;
        for (const auto& q : quality(image_batch(sr), image_batch(hr), shave)) out.emplace_back(q.psnr_db, q.ssim);
        return out;
      },
      py::arg("sr"), py::arg("hr"), py::arg("shave") = 0, "Per-image (PSNR, SSIM) on luma of [0, 1] RGB batches.");
}
