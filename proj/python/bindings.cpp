#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "stereodistill/cli.hpp"
#include "stereodistill/distill.hpp"
#include "stereodistill/errors.hpp"
#include "stereodistill/evaluation.hpp"

namespace py = pybind11;
using namespace stereodistill;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape s(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(s), std::vector<float>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array a(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data(), t.data() + t.numel(), a.mutable_data());
  return a;
}

Mask to_mask(const std::optional<py::array_t<bool, py::array::c_style | py::array::forcecast>>& m) {
  if (!m) return {};
  return Mask(m->data(), m->data() + m->size());
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  d["epe"] = r.epe_px;
  d["d1"] = r.d1_percent;
  for (const auto& [k, v] : r.kpx_percent) d[py::str("px" + std::to_string(k))] = v;
  d["n_valid"] = r.n_valid;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Stereo network distillation toolkit";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<CapabilityError>(m, "CapabilityError", PyExc_RuntimeError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);

  m.def("preset_names", &preset_names);

  m.def(
      "profile",
      [](const std::string& preset_name, int64_t height, int64_t width, bool train_mode) {
        const ComplexityReport r =
            profile_model(preset(preset_name), height, width, train_mode ? PredictMode::train : PredictMode::infer);
        py::dict modules;
        for (const auto& mc : r.modules) modules[py::str(mc.module)] = py::make_tuple(mc.params, mc.macs);
        py::dict d;
        d["variant"] = r.variant;
        d["params"] = r.params;
        d["macs"] = r.macs;
        d["modules"] = modules;
        return d;
      },
      py::arg("preset") = "DSNet", py::arg("height") = 544, py::arg("width") = 960, py::arg("train") = false);

  m.def(
      "metrics",
      [](const Array& pred, const Array& gt, std::optional<py::array_t<bool, py::array::c_style | py::array::forcecast>> mask) {
        return report_dict(evaluate_metrics(to_tensor(pred), to_tensor(gt), to_mask(mask)));
      },
      py::arg("pred"), py::arg("gt"), py::arg("mask") = py::none());

  m.def(
      "synth_sample",
      [](uint64_t seed, int height, int width, int max_disparity, int n_objects) {
        const StereoSample s = synth_sample(seed, height, width, max_disparity, n_objects);
        py::array_t<bool> valid(std::vector<py::ssize_t>{height, width});
        std::copy(s.valid.begin(), s.valid.end(), valid.mutable_data());
        return py::make_tuple(to_array(s.left), to_array(s.right), to_array(s.disparity), valid);
      },
      py::arg("seed"), py::arg("height") = 64, py::arg("width") = 128, py::arg("max_disparity") = 32,
      py::arg("n_objects") = 3);

  m.def("read_pfm", [](const std::string& path) { return to_array(read_pfm(path).data); });
  m.def("write_pfm", [](const std::string& path, const Array& a) { write_pfm(path, to_tensor(a)); });

  py::class_<StereoNet>(m, "StereoNet")
      .def(py::init([](const std::string& name, uint64_t seed) {
             auto net = std::make_unique<StereoNet>(preset(name));
             net->initialize(seed);
             return net;
           }),
           py::arg("preset") = "DSNet", py::arg("seed") = 0)
      .def_static("load", [](const std::string& path) { return load_model(path); })
      .def_property_readonly("name", [](const StereoNet& n) { return n.config().name(); })
      .def("save", [](StereoNet& n, const std::string& path) { save_checkpoint(path, n, 0); })
      .def("predict", [](StereoNet& n, const Array& left, const Array& right) {
        Tensor disp;
        {
          py::gil_scoped_release release;
          disp = n.predict(to_tensor(left), to_tensor(right));
        }
        return to_array(disp);
      });

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const CommandResult r = run_cli(args, out, err);
        return py::make_tuple(r.exit_code, out.str(), err.str());
      },
      py::arg("args"));
}
