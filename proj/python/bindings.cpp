#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "isphar/cli.hpp"
#include "isphar/error.hpp"
#include "isphar/experiments.hpp"
#include "isphar/inference.hpp"
#include "isphar/modelpack.hpp"

namespace py = pybind11;
using namespace isphar;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<std::uint8_t> to_bytes(const py::bytes& b) {
  const std::string s = b;
  return {s.begin(), s.end()};
}

py::bytes from_bytes(const std::vector<std::uint8_t>& v) {
  return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
}

Window window_from(const Array& a, double rate_hz) {
  if (a.ndim() != 2 || a.shape(1) != static_cast<py::ssize_t>(kNumChannels))
    throw Error(ErrorCode::InvalidArgument, "window must have shape (n, 6)");
  const auto n = static_cast<std::size_t>(a.shape(0));
  Window w(n, rate_hz);
  auto r = a.unchecked<2>();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < kNumChannels; ++c)
      w.at(i, c) = r(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(c));
  return w;
}

LabeledFeatures table_from(const Array& x, const std::vector<int>& y, const std::vector<std::string>& classes) {
  if (x.ndim() != 2 || x.shape(1) != static_cast<py::ssize_t>(kNumFeatures))
    throw Error(ErrorCode::InvalidArgument, "features must have shape (n, 78)");
  if (static_cast<std::size_t>(x.shape(0)) != y.size()) throw Error(ErrorCode::DimMismatch, "x and y lengths differ");
  LabeledFeatures t;
  t.dims = kNumFeatures;
  t.classes = classes;
  const auto names = feature_names();
  t.columns.assign(names.begin(), names.end());
  t.x.assign(x.data(), x.data() + x.size());
  t.y = y;
  for (int v : y)
    if (v < 0 || static_cast<std::size_t>(v) >= classes.size())
      throw Error(ErrorCode::UnknownLabel, "label index " + std::to_string(v) + " outside the class list");
  return t;
}

FeatureMask mask_from(const std::vector<std::string>& names) {
  return names.empty() ? FeatureMask::all() : FeatureMask::from_names(names);
}

py::dict footprint_dict(const FootprintReport& r) {
  py::dict d, breakdown;
  d["stack_bytes"] = r.stack_bytes;
  d["program_bytes"] = r.program_bytes;
  d["data_bytes"] = r.data_bytes;
  for (const auto& e : r.breakdown) breakdown[py::str(std::string(section_name(e.section)) + "." + e.name)] = e.bytes;
  d["breakdown"] = breakdown;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "In-sensor activity recognition: features, micro models, packing, streaming inference";

  static py::exception<Error> exc(m, "IspharError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(exc, e.what());
    }
  });

  m.attr("NUM_FEATURES") = kNumFeatures;
  m.attr("FEATURE_MANIFEST_VERSION") = kFeatureManifestVersion;

  m.def("feature_names", [] {
    const auto names = feature_names();
    return std::vector<std::string>(names.begin(), names.end());
  });
  m.def("reference_mask_16", [] { return reference_mask_16().names(); });
  m.def(
      "extract_features",
      [](const Array& window, std::size_t ma_width) {
        const FeatureVector fv = extract_features(window_from(window, 26.0), ma_width);
        return std::vector<double>(fv.begin(), fv.end());
      },
      py::arg("window"), py::arg("ma_width") = kDefaultMaWidth);
  m.def(
      "select_top_features",
      [](const std::vector<double>& importance, double fraction) {
        return select_top_features(importance, fraction).names();
      },
      py::arg("importance"), py::arg("fraction"));
  m.def(
      "mlp_parameter_count",
      [](const std::vector<std::size_t>& dims) { return mlp_init(dims, 0).parameter_count(); }, py::arg("dims"));

  m.def(
      "synth_corpus",
      [](double minutes, std::uint64_t seed) {
        PipelineConfig cfg;
        cfg.minutes_per_class = minutes;
        cfg.seed = seed;
        const Corpus c = synth_corpus(cfg);
        Array x({static_cast<py::ssize_t>(c.features.size()), static_cast<py::ssize_t>(kNumFeatures)});
        std::copy(c.features.x.begin(), c.features.x.end(), x.mutable_data());
        return py::make_tuple(x, c.features.y, c.classes);
      },
      py::arg("minutes") = 2.0, py::arg("seed") = 0,
      "Synthetic default corpus as (features[n,78], labels, class names).");

  m.def(
      "train",
      [](const Array& x, const std::vector<int>& y, const std::vector<std::string>& classes, const std::string& kind,
         const std::vector<std::string>& features, std::uint64_t seed) {
        PipelineConfig cfg;
        cfg.seed = seed;
        const LabeledFeatures t = table_from(x, y, classes);
        const IndexSplit s = split_stratified_indices(t.label_names(), cfg.split, seed);
        const Model model = train_model(t.subset(s.train), t.subset(s.validation), {kind, mask_from(features)}, cfg);
        return from_bytes(encode(model));
      },
      py::arg("x"), py::arg("y"), py::arg("classes"), py::arg("kind") = "forest",
      py::arg("features") = std::vector<std::string>{}, py::arg("seed") = 0,
      "Train on the configured split and return the .ispm pack bytes.");

  m.def(
      "cross_validate",
      [](const Array& x, const std::vector<int>& y, const std::vector<std::string>& classes, const std::string& kind,
         const std::vector<std::string>& features, std::size_t folds, std::uint64_t seed) {
        PipelineConfig cfg;
        cfg.seed = seed;
        cfg.folds = folds;
        return cross_validate(table_from(x, y, classes), {kind, mask_from(features)}, cfg).fold_accuracy;
      },
      py::arg("x"), py::arg("y"), py::arg("classes"), py::arg("kind") = "forest",
      py::arg("features") = std::vector<std::string>{}, py::arg("folds") = 5, py::arg("seed") = 0);

  m.def(
      "predict",
      [](const py::bytes& pack, const Array& x) {
        const Model model = decode(to_bytes(pack));
        if (x.ndim() != 2 || x.shape(1) != static_cast<py::ssize_t>(kNumFeatures))
          throw Error(ErrorCode::InvalidArgument, "features must have shape (n, 78)");
        std::vector<std::size_t> out;
        const auto idx = mask_of(model).indices();
        std::vector<float> fv(idx.size());
        for (py::ssize_t i = 0; i < x.shape(0); ++i) {
          for (std::size_t j = 0; j < idx.size(); ++j) fv[j] = static_cast<float>(x.at(i, static_cast<py::ssize_t>(idx[j])));
          out.push_back(predict_class(model, std::span<const float>(fv)));
        }
        return out;
      },
      py::arg("pack"), py::arg("x"));

  m.def(
      "footprint", [](const py::bytes& pack) { return footprint_dict(footprint(to_bytes(pack))); }, py::arg("pack"));
  m.def(
      "audit",
      [](const py::bytes& pack, std::size_t max_stack, std::size_t max_program, std::size_t max_data) {
        const AuditResult r = audit(footprint(to_bytes(pack)), Budget{max_stack, max_program, max_data});
        py::list v;
        for (const auto& x : r.violations) v.append(py::make_tuple(std::string(section_name(x.section)), x.overage()));
        return py::make_tuple(r.pass, v);
      },
      py::arg("pack"), py::arg("max_stack") = 850, py::arg("max_program") = 32768, py::arg("max_data") = 8192);
  m.def(
      "describe", [](const py::bytes& pack) { return describe(to_bytes(pack)); }, py::arg("pack"));
  m.def(
      "roundtrip", [](const py::bytes& pack) { return from_bytes(encode(decode(to_bytes(pack)))); }, py::arg("pack"),
      "Decode then re-encode a pack.");

  m.def(
      "duty_cycle", [](double t_inf, double t_win) { return duty_cycle(t_inf, t_win).idle_fraction; },
      py::arg("t_inference_ms"), py::arg("t_window_ms"));

  py::class_<Engine>(m, "Engine")
      .def(py::init([](const py::bytes& pack, std::size_t window_len, std::size_t ma_width, std::size_t stride) {
             return Engine(to_bytes(pack), window_len, ma_width, stride);
           }),
           py::arg("pack"), py::arg("window_len") = 39, py::arg("ma_width") = kDefaultMaWidth, py::arg("stride") = 0)
      .def(
          "push",
          [](Engine& e, const Array& samples) {
            if (samples.ndim() != 2 || samples.shape(1) != static_cast<py::ssize_t>(kNumChannels))
              throw Error(ErrorCode::InvalidArgument, "samples must have shape (n, 6)");
            py::list events;
            for (py::ssize_t i = 0; i < samples.shape(0); ++i) {
              Sample s;
              for (std::size_t c = 0; c < kNumChannels; ++c) s[c] = samples.at(i, static_cast<py::ssize_t>(c));
              if (e.push_sample(s)) {
                const auto& ev = e.last_event();
                events.append(py::make_tuple(ev.window_index, ev.label, ev.top_score));
              }
            }
            return events;
          },
          py::arg("samples"), "Push (n, 6) samples; returns (window_index, label, top_score) events.")
      .def_property_readonly("buffer_bytes", &Engine::buffer_bytes)
      .def("reset", &Engine::reset);

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "isphar");
        std::ostringstream out, err;
        const int code = run_command(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a CLI subcommand; returns (exit_code, stdout, stderr).");
}
