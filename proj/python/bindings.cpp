#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "needletrack/calibrate.hpp"
#include "needletrack/errors.hpp"
#include "needletrack/harness.hpp"
#include "needletrack/image_io.hpp"
#include "needletrack/preprocess.hpp"
#include "needletrack/simulate.hpp"

namespace py = pybind11;
using namespace needletrack;

namespace {

using Triple = std::array<double, 3>;

py::array_t<float> to_numpy(const Tensor<float>& t) {
  py::array_t<float> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Tensor<float> from_numpy(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor<float>(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

TipPosition tip(const Triple& p) { return {p[0], p[1], p[2]}; }
Triple triple(const TipPosition& p) { return {p.x, p.y, p.z}; }

py::dict stats(const AxisStats& s) {
  py::dict d;
  d["mean_mm"] = s.mean_mm;
  d["std_mm"] = s.std_mm;
  return d;
}

}  // namespace

PYBIND11_MODULE(_needletrack, m) {
  m.doc() = "Needle-tip localisation from simulated scatter images";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

  py::class_<AxisRange>(m, "AxisRange")
      .def(py::init<double, double>(), py::arg("min"), py::arg("max"))
      .def_readwrite("min", &AxisRange::min)
      .def_readwrite("max", &AxisRange::max);

  py::class_<NormalizationConfig>(m, "NormalizationConfig")
      .def(py::init<>())
      .def_readwrite("x", &NormalizationConfig::x)
      .def_readwrite("y", &NormalizationConfig::y)
      .def_readwrite("z", &NormalizationConfig::z)
      .def("midpoint", [](const NormalizationConfig& c) { return triple(c.midpoint()); });

  py::class_<OpticsConfig>(m, "OpticsConfig")
      .def(py::init<>())
      .def_static("desk_scale", &OpticsConfig::desk_scale)
      .def_readwrite("camera_height", &OpticsConfig::camera_height)
      .def_readwrite("image_side", &OpticsConfig::image_side)
      .def_readwrite("field_of_view", &OpticsConfig::field_of_view)
      .def_readwrite("source_power", &OpticsConfig::source_power)
      .def_readwrite("background_level", &OpticsConfig::background_level)
      .def_readwrite("gaussian_noise_sigma", &OpticsConfig::gaussian_noise_sigma)
      .def_readwrite("poisson_noise", &OpticsConfig::poisson_noise)
      .def_readwrite("max_count", &OpticsConfig::max_count)
      .def_readwrite("seed", &OpticsConfig::seed)
      .def_property_readonly("pixel_size", &OpticsConfig::pixel_size);

  m.def(
      "normalize_position",
      [](const Triple& p, const NormalizationConfig& cfg) {
        const auto r = normalize_position(tip(p), cfg);
        return py::make_tuple(r.value, r.out_of_range);
      },
      py::arg("position"), py::arg("config") = NormalizationConfig{},
      "Returns (normalized xyz, out_of_range flag).");
  m.def(
      "denormalize_position",
      [](const Triple& n, const NormalizationConfig& cfg) { return triple(denormalize_position(n, cfg)); },
      py::arg("normalized"), py::arg("config") = NormalizationConfig{});

  m.def("surface_irradiance", &surface_irradiance, py::arg("rho"), py::arg("depth"), py::arg("power"));
  m.def(
      "render_image",
      [](const Triple& p, const OpticsConfig& cfg) { return to_numpy(render_scatter_image(tip(p), cfg)); },
      py::arg("tip"), py::arg("optics"), "Noisy scatter image in camera counts, shape (side, side).");

  m.def(
      "pivot_calibrate",
      [](const std::vector<Eigen::Matrix3d>& rotations, const std::vector<Eigen::Vector3d>& translations) {
        if (rotations.size() != translations.size()) {
          throw DataError("got " + std::to_string(rotations.size()) + " rotations and " +
                          std::to_string(translations.size()) + " translations");
        }
        std::vector<Pose> poses(rotations.size());
        for (std::size_t i = 0; i < poses.size(); ++i) poses[i] = {rotations[i], translations[i]};
        const auto cal = pivot_calibrate(poses);
        py::dict d;
        d["tip_offset_cm"] = cal.tip_offset;
        d["pivot_point_cm"] = cal.pivot_point;
        d["rms_residual_cm"] = cal.rms_residual;
        d["condition_number"] = cal.condition_number;
        return d;
      },
      py::arg("rotations"), py::arg("translations"));

  m.def(
      "compute_metrics",
      [](const std::vector<Triple>& predicted, const std::vector<Triple>& truth) {
        std::vector<TipPosition> p, t;
        for (const auto& v : predicted) p.push_back(tip(v));
        for (const auto& v : truth) t.push_back(tip(v));
        const Metrics mt = compute_metrics(p, t);
        py::dict d;
        d["x"] = stats(mt.x);
        d["y"] = stats(mt.y);
        d["z"] = stats(mt.z);
        d["l2"] = stats(mt.l2);
        d["n_test"] = mt.n_test;
        return d;
      },
      py::arg("predicted_cm"), py::arg("truth_cm"));

  m.def("read_png", [](const std::filesystem::path& p) { return to_numpy(read_png(p)); }, py::arg("path"));

  py::class_<TrainedModel>(m, "Model")
      .def_static("load", &load_model, py::arg("path"))
      .def_static(
          "untrained",
          [](std::size_t input_side, std::uint64_t seed) {
            TrainedModel t;
            t.network.input_side = input_side;
            t.network.validate();
            t.params = build_network<float>(t.network, seed);
            return t;
          },
          py::arg("input_side") = 64, py::arg("seed") = 0, "He-initialised network, mainly for testing.")
      .def_property_readonly("input_side", [](const TrainedModel& t) { return t.network.input_side; })
      .def(
          "predict",
          [](const TrainedModel& t, const py::array_t<float, py::array::c_style | py::array::forcecast>& frame) {
            return triple(predict_position(t, from_numpy(frame)));
          },
          py::arg("frame"), "Tip position in cm from a raw frame of camera counts.");
}
