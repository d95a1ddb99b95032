#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spur/common.hpp"
#include "spur/config.hpp"
#include "spur/encoder.hpp"
#include "spur/sscv.hpp"

namespace py = pybind11;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

spur::ConfigValue to_value(const py::handle& h, const std::string& key) {
  if (py::isinstance<py::bool_>(h)) return {h.cast<bool>()};
  if (py::isinstance<py::int_>(h) || py::isinstance<py::float_>(h)) return {h.cast<double>()};
  if (py::isinstance<py::str>(h)) return {h.cast<std::string>()};
  if (py::isinstance<py::list>(h) || py::isinstance<py::tuple>(h)) {
    std::vector<spur::ConfigValue> items;
    for (const auto& e : h) items.push_back(to_value(e, key));
    return {std::move(items)};
  }
  throw spur::ValidationError("config key '" + key + "' has an unsupported value type");
}

spur::ConfigTable to_table(const py::dict& d) {
  spur::ConfigTable t;
  for (const auto& [k, v] : d) {
    const std::string key = py::str(k);
    if (py::isinstance<py::dict>(v))
      t.tables[key] = to_table(v.cast<py::dict>());
    else
      t.values[key] = to_value(v, key);
  }
  return t;
}

spur::PipelineConfig to_config(const std::optional<py::dict>& d) {
  if (!d) return {};
  return spur::pipeline_config_from_table(to_table(*d), "config");
}

F32Array to_array(const std::vector<double>& values, std::vector<py::ssize_t> shape) {
  F32Array out(shape);
  float* p = out.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) p[i] = static_cast<float>(values[i]);
  return out;
}

F32Array py_extract(const F64Array& samples, int sample_rate, const std::optional<py::dict>& config) {
  if (samples.ndim() != 2 || samples.shape(0) != 4)
    throw spur::ValidationError("samples must have shape (4, N), got " + std::to_string(samples.ndim()) +
                                "-d array with " + std::to_string(samples.ndim() ? samples.shape(0) : 0) +
                                " rows");
  const spur::PipelineConfig cfg = to_config(config);
  const auto n = static_cast<std::size_t>(samples.shape(1));
  spur::FoaChannels rows;
  for (std::size_t m = 0; m < 4; ++m) rows[m].assign(samples.data() + m * n, samples.data() + (m + 1) * n);
  std::vector<double> values;
  std::size_t frames = 0, bands = 0;
  {
    py::gil_scoped_release release;
    const spur::SscvTensor s = spur::extract_features(spur::FoaClip(std::move(rows), sample_rate), cfg.extraction);
    values = s.values();
    frames = s.n_frames();
    bands = s.n_bands();
  }
  return to_array(values, {static_cast<py::ssize_t>(frames), static_cast<py::ssize_t>(bands), spur::kSscvDim});
}

F32Array py_encode(const F32Array& sscv, const std::string& weights_path, const std::optional<py::dict>& config) {
  if (sscv.ndim() != 3 || sscv.shape(2) != spur::kSscvDim)
    throw spur::ValidationError("sscv must have shape (T, B, 16)");
  const spur::PipelineConfig cfg = to_config(config);
  spur::SscvTensor s(sscv.shape(0), sscv.shape(1), 0.0, spur::kAbsolutePowerFloor);
  std::copy(sscv.data(), sscv.data() + sscv.size(), s.values().begin());
  Eigen::MatrixXd tokens;
  {
    py::gil_scoped_release release;
    const spur::EncoderWeights w = spur::load_weights(weights_path, cfg.encoder);
    tokens = spur::encode(s, w, cfg.encoder).tokens;
  }
  std::vector<double> values(static_cast<std::size_t>(tokens.size()));
  for (Eigen::Index r = 0; r < tokens.rows(); ++r)
    for (Eigen::Index c = 0; c < tokens.cols(); ++c) values[r * tokens.cols() + c] = tokens(r, c);
  return to_array(values, {static_cast<py::ssize_t>(tokens.rows()), static_cast<py::ssize_t>(tokens.cols())});
}

}  // namespace

PYBIND11_MODULE(_spur, m) {
  m.doc() = "SSCV feature extraction and encoder forward pass";
  m.attr("__version__") = spur::kVersion;

  // Translators run newest first, so the base class is registered first.
  py::register_exception<spur::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<spur::ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<spur::IoError>(m, "IoError", PyExc_OSError);

  m.def("extract", &py_extract, py::arg("samples"), py::arg("sample_rate"), py::arg("config") = py::none(),
        "SSCV features of a (4, N) canonical W, X, Y, Z / SN3D clip as a (T, B, 16) float32 array.");
  m.def("encode", &py_encode, py::arg("sscv"), py::arg("weights_path"), py::arg("config") = py::none(),
        "Encoder tokens (P, adapter_out_dim) for a (T, B, 16) SSCV array.");
}
