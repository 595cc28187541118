#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "glmotion/analysis.hpp"
#include "glmotion/io.hpp"
#include "glmotion/synth.hpp"
#include "glmotion/verify.hpp"

namespace py = pybind11;
using namespace glmotion;

namespace {

py::array_t<double> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::array_t<double> coords_array(const RawSequence& s) {
  py::array_t<double> out({s.frames, s.persons, s.joints, std::size_t{3}});
  std::copy(s.coords.begin(), s.coords.end(), out.mutable_data());
  return out;
}

RawSequence make_sequence(py::array_t<double, py::array::c_style | py::array::forcecast> coords, std::string id,
                          std::optional<int> label, std::size_t center_joint) {
  if (coords.ndim() != 4 || coords.shape(3) != 3) throw ShapeError("coords must have shape [T, P, K, 3]");
  RawSequence s;
  s.id = std::move(id);
  s.label = label;
  s.frames = static_cast<std::size_t>(coords.shape(0));
  s.persons = static_cast<std::size_t>(coords.shape(1));
  s.joints = static_cast<std::size_t>(coords.shape(2));
  s.center_joint = center_joint;
  s.coords.assign(coords.data(), coords.data() + coords.size());
  return s;
}

}  // namespace

PYBIND11_MODULE(_glmotion, m) {
  m.doc() = "Skeleton motion transformer pretraining (C++ core)";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<UsageError>(m, "UsageError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<LengthError>(m, "LengthError", base.ptr());
  py::register_exception<MaskError>(m, "MaskError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  py::enum_<PositionalMode>(m, "PositionalMode")
      .value("tight", PositionalMode::trainable_tight)
      .value("once", PositionalMode::trainable_once)
      .value("sinusoidal", PositionalMode::fixed_sinusoidal);
  py::enum_<InputRepresentation>(m, "InputRepresentation")
      .value("disentangled", InputRepresentation::disentangled)
      .value("local_only", InputRepresentation::local_only)
      .value("entangled", InputRepresentation::entangled);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("joints", &ModelConfig::joints)
      .def_readwrite("persons", &ModelConfig::persons)
      .def_readwrite("embed_dim", &ModelConfig::embed_dim)
      .def_readwrite("blocks", &ModelConfig::blocks)
      .def_readwrite("spatial_heads", &ModelConfig::spatial_heads)
      .def_readwrite("temporal_heads", &ModelConfig::temporal_heads)
      .def_readwrite("t_max", &ModelConfig::t_max)
      .def_readwrite("positional_mode", &ModelConfig::positional_mode)
      .def_readwrite("p2p_attention", &ModelConfig::p2p_attention)
      .def("parameter_count", [](const ModelConfig& c) { return parameter_count(c); });

  py::class_<MpdpConfig>(m, "MpdpConfig")
      .def(py::init<>())
      .def_readwrite("intervals", &MpdpConfig::intervals)
      .def_readwrite("magnitude_classes", &MpdpConfig::magnitude_classes)
      .def_readwrite("eps_dir", &MpdpConfig::eps_dir)
      .def_readwrite("lambda_dir", &MpdpConfig::lambda_dir)
      .def_readwrite("lambda_mag", &MpdpConfig::lambda_mag)
      .def("edges", &MpdpConfig::edges);

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("epochs", &RunConfig::epochs)
      .def_readwrite("batch_size", &RunConfig::batch_size)
      .def_readwrite("lr", &RunConfig::lr)
      .def_readwrite("lr_decay", &RunConfig::lr_decay)
      .def_readwrite("weight_decay", &RunConfig::weight_decay)
      .def_readwrite("max_steps", &RunConfig::max_steps)
      .def_readwrite("representation", &RunConfig::representation)
      .def_readwrite("probe_epochs", &RunConfig::probe_epochs)
      .def_readwrite("probe_batch_size", &RunConfig::probe_batch_size)
      .def_readwrite("probe_lr", &RunConfig::probe_lr)
      .def_property(
          "shear", [](const RunConfig& r) { return r.augment.shear; },
          [](RunConfig& r, bool v) { r.augment.shear = v; })
      .def_property(
          "interpolate", [](const RunConfig& r) { return r.augment.interpolate; },
          [](RunConfig& r, bool v) { r.augment.interpolate = v; })
      .def_property(
          "corrupt", [](const RunConfig& r) { return r.augment.corrupt; },
          [](RunConfig& r, double v) { r.augment.corrupt = v; })
      .def_property(
          "input_mode", [](const RunConfig& r) { return r.input_mode.to_string(); },
          [](RunConfig& r, const std::string& v) { r.input_mode = InputMode::parse(v); });

  py::class_<RawSequence>(m, "Sequence")
      .def(py::init(&make_sequence), py::arg("coords"), py::arg("id") = "seq", py::arg("label") = std::nullopt,
           py::arg("center_joint") = 0)
      .def_readonly("id", &RawSequence::id)
      .def_readonly("label", &RawSequence::label)
      .def_readonly("frames", &RawSequence::frames)
      .def_readonly("persons", &RawSequence::persons)
      .def_readonly("joints", &RawSequence::joints)
      .def_readonly("center_joint", &RawSequence::center_joint)
      .def_property_readonly("coords", &coords_array)
      .def("to_canonical", [](const RawSequence& s) { return write_canonical(s); })
      .def_static("from_canonical", [](const std::string& text) { return read_canonical(text); });

  m.def(
      "synth_generate",
      [](std::uint64_t seed, std::size_t classes, std::size_t per_class, std::size_t joints, double noise) {
        Rng rng(seed);
        SynthConfig sc;
        sc.n_classes = classes;
        sc.n_per_class = per_class;
        sc.joints = joints;
        sc.noise_sigma = noise;
        return synth_generate(rng, sc);
      },
      py::arg("seed") = 0, py::arg("classes") = 4, py::arg("per_class") = 100, py::arg("joints") = 5,
      py::arg("noise") = 0.01);
  m.def("read_dataset", &read_dataset);
  m.def("write_dataset", &write_dataset);
  m.def("parse_ntu_skeleton_file", [](const std::filesystem::path& p) { return parse_ntu_skeleton_file(p); });

  m.def("direction_class",
        [](std::array<double, 3> d, double eps) { return direction_class(d, eps); }, py::arg("disp"),
        py::arg("eps_dir") = 0.005);
  m.def(
      "magnitude_class",
      [](std::array<double, 3> d, const MpdpConfig& cfg) {
        auto e = cfg.edges();
        return magnitude_class(d, e);
      },
      py::arg("disp"), py::arg("config") = MpdpConfig{});

  py::class_<EpochMetrics>(m, "EpochMetrics")
      .def_readonly("epoch", &EpochMetrics::epoch)
      .def_readonly("loss", &EpochMetrics::loss)
      .def_readonly("dir_acc", &EpochMetrics::dir_acc)
      .def_readonly("mag_acc", &EpochMetrics::mag_acc)
      .def_readonly("lr", &EpochMetrics::lr)
      .def_readonly("steps", &EpochMetrics::steps);

  py::class_<Pretrained>(m, "Model")
      .def_readonly("model", &Pretrained::model)
      .def_readonly("mpdp", &Pretrained::mpdp)
      .def_property_readonly("positional", [](const Pretrained& p) { return to_array(p.params.positional); })
      .def("checksum", [](const Pretrained& p) { return parameter_checksum(p.params); })
      .def(
          "save", [](const Pretrained& p, const std::filesystem::path& path) {
            save_pretrained(path, p.params, p.heads, p.model, p.mpdp);
          })
      .def("features",
           [](const Pretrained& p, const std::vector<RawSequence>& data, const RunConfig& run) {
             return to_array(extract_features(data, p.params, p.model, run));
           })
      .def("mpdp_loss",
           [](const Pretrained& p, const std::vector<RawSequence>& data, const RunConfig& run) {
             return mpdp_dataset_loss(data, p.params, p.heads, p.model, p.mpdp, run);
           })
      .def(
          "probe",
          [](const Pretrained& p, const std::vector<RawSequence>& train, const std::vector<RawSequence>& test,
             const RunConfig& run) {
            auto r = linear_probe(train, test, p.params, p.model, run);
            return py::dict(py::arg("train_accuracy") = r.train_accuracy, py::arg("test_accuracy") = r.test_accuracy,
                            py::arg("classes") = r.classes);
          })
      .def("attention",
           [](const Pretrained& p, const std::vector<RawSequence>& data, std::size_t samples, std::size_t window) {
             auto s = average_attention(data, p.params, p.model, RunConfig{}, samples, window);
             return py::dict(py::arg("mean_distance") = s.mean_distance, py::arg("samples") = s.samples,
                             py::arg("window") = s.window);
           },
           py::arg("data"), py::arg("samples") = 300, py::arg("window") = 30);

  m.def(
      "init_model",
      [](const ModelConfig& model, const MpdpConfig& mpdp, std::uint64_t seed) {
        model.validate();
        mpdp.validate();
        Rng rng = stream_rng(seed, 0);
        Pretrained p;
        p.model = model;
        p.mpdp = mpdp;
        p.params = init_model(model, rng);
        p.heads = init_heads(model, mpdp, rng);
        return p;
      },
      py::arg("model"), py::arg("mpdp") = MpdpConfig{}, py::arg("seed") = 0);
  m.def("load_model", &load_pretrained);
  m.def(
      "pretrain",
      [](Pretrained& p, const std::vector<RawSequence>& data, const RunConfig& run) {
        py::gil_scoped_release release;
        return pretrain(data, p.params, p.heads, p.model, p.mpdp, run).epochs;
      },
      py::arg("model"), py::arg("data"), py::arg("run"));

  m.def("gradcheck", [](std::uint64_t seed) {
    auto r = toy_gradcheck(seed, 1e-3);
    return py::dict(py::arg("max_rel_error") = r.max_rel_error, py::arg("checked") = r.checked,
                    py::arg("worst") = r.worst, py::arg("passed") = r.passed);
  }, py::arg("seed") = 13);

  m.def("mean_attended_distance", [](py::array_t<double, py::array::c_style | py::array::forcecast> map) {
    if (map.ndim() != 2 || map.shape(0) != map.shape(1)) throw ShapeError("expected a square matrix");
    return mean_attended_distance({map.data(), static_cast<std::size_t>(map.size())},
                                  static_cast<std::size_t>(map.shape(0)));
  });
  m.def("posemb_similarity", [](py::array_t<double, py::array::c_style | py::array::forcecast> pos) {
    if (pos.ndim() != 3) throw ShapeError("expected [T, PK, D]");
    Shape shape{static_cast<std::size_t>(pos.shape(0)), static_cast<std::size_t>(pos.shape(1)),
                static_cast<std::size_t>(pos.shape(2))};
    auto sim = posemb_similarity(Tensor::from(shape, std::vector<double>(pos.data(), pos.data() + pos.size())));
    const std::size_t n = sim.frames * sim.tokens;
    py::array_t<double> out({sim.frames, sim.tokens, sim.frames, sim.tokens});
    std::copy(sim.values.begin(), sim.values.begin() + static_cast<std::ptrdiff_t>(n * n), out.mutable_data());
    return out;
  });
}
