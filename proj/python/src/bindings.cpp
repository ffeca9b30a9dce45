// Python bindings. Arrays cross the boundary as numpy copies; C++ errors
// become szdetect.SzdError with the error kind in `.kind`.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <cstring>

#include "szd/error.hpp"
#include "szd/evaluation.hpp"
#include "szd/image_store.hpp"
#include "szd/occlusion.hpp"
#include "szd/pipeline.hpp"
#include "szd/synth.hpp"
#include "szd/training.hpp"

namespace py = pybind11;
using namespace szd;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

// (30, 3, 16, 16) float32 view of a sequence.
py::array_t<float> sequence_array(const ImageSequence& s) {
  py::array_t<float> out({kSubWindows, kBandCount, kGridSize, kGridSize});
  std::memcpy(out.mutable_data(), s.data.data(), s.data.size() * sizeof(float));
  return out;
}

ImageSequence sequence_from(const FloatArray& a) {
  if (a.size() != kSequenceSize) {
    throw Error(ErrorKind::kInvalidArgument, "sequence must have 30 x 3 x 16 x 16 values");
  }
  ImageSequence s;
  s.data.assign(a.data(), a.data() + a.size());
  return s;
}

py::dict recording_dict(const Recording& r) {
  py::dict channels;
  for (const auto& c : r.channels) channels[py::str(c.label)] = to_numpy(c.samples);
  py::dict d;
  d["id"] = r.id;
  d["patient_id"] = r.patient_id;
  d["sample_rate_hz"] = r.sample_rate_hz;
  d["duration_s"] = r.duration_s;
  d["channels"] = channels;
  return d;
}

py::dict annotation_dict(const SeizureAnnotation& a) {
  py::dict d;
  d["recording"] = a.recording;
  d["onset_s"] = a.onset_s;
  d["offset_s"] = a.offset_s;
  return d;
}

SeizureAnnotation annotation_from(const py::dict& d) {
  return {d["recording"].cast<std::string>(), d["onset_s"].cast<double>(), d["offset_s"].cast<double>()};
}

py::dict tally_dict(const Tally& t) {
  py::dict d;
  d["seizures"] = t.seizures;
  d["detected_seizures"] = t.detected_seizures;
  d["events"] = t.events;
  d["false_positive_events"] = t.false_positive_events;
  d["tp_windows"] = t.tp_windows;
  d["fn_windows"] = t.fn_windows;
  d["fp_windows"] = t.fp_windows;
  d["tn_windows"] = t.tn_windows;
  d["hours"] = t.hours();
  d["event_sensitivity"] = t.event_sensitivity();
  d["window_sensitivity"] = t.window_sensitivity();
  d["false_positives_per_hour"] = t.false_positives_per_hour();
  return d;
}

py::dict report_dict(const EvalReport& r) {
  py::dict per;
  for (const auto& [p, t] : r.per_patient) per[py::str(p)] = tally_dict(t);
  py::dict d;
  d["total"] = tally_dict(r.total);
  d["per_patient"] = per;
  return d;
}

}  // namespace

PYBIND11_MODULE(_szdetect, m) {
  m.doc() = "EEG seizure detection core";

  static py::exception<Error> szd_error(m, "SzdError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = szd_error;
      py::object inst = err(e.what());
      inst.attr("kind") = std::string(to_string(e.kind()));
      inst.attr("exit_code") = exit_code(e.kind());
      PyErr_SetObject(err.ptr(), inst.ptr());
    }
  });

  m.attr("SUB_WINDOWS") = kSubWindows;
  m.attr("BANDS") = kBandCount;
  m.attr("GRID") = kGridSize;
  m.attr("WINDOW_SECONDS") = kWindowSeconds;

  m.def(
      "band_magnitudes",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& block, double fs) {
        const auto b = band_magnitudes(std::span<const double>(block.data(), block.size()), fs);
        return py::make_tuple(b[0], b[1], b[2]);
      },
      py::arg("block"), py::arg("sample_rate_hz"), "Summed |FFT| per band of a one-second block.");

  m.def(
      "polar_project", [](double x, double y, double z) {
        const auto p = polar_project({x, y, z});
        return py::make_tuple(p.u, p.v);
      },
      py::arg("x"), py::arg("y"), py::arg("z"));

  m.def(
      "electrode_positions",
      [] {
        const auto& L = ElectrodeLayout::standard_1020();
        py::dict d;
        for (const auto& n : L.names()) {
          const auto p = L.projected(n);
          d[py::str(n)] = py::make_tuple(p.u, p.v);
        }
        return d;
      },
      "Projected 2-D positions of the standard 10-20 electrodes.");

  m.def(
      "read_edf", [](const std::filesystem::path& p) { return recording_dict(read_edf(p)); }, py::arg("path"));

  m.def(
      "synth_patient",
      [](const std::string& config_text, int index) {
        const auto p = generate_patient(parse_synth_config(config_text), index);
        py::list recs, anns;
        for (const auto& r : p.recordings) recs.append(recording_dict(r));
        for (const auto& a : p.annotations) anns.append(annotation_dict(a));
        py::dict d;
        d["patient_id"] = p.patient_id;
        d["focus"] = p.focus;
        d["recordings"] = recs;
        d["annotations"] = anns;
        return d;
      },
      py::arg("config_text") = "", py::arg("index") = 0,
      "Generate one synthetic patient from `key = value` config text.");

  m.def(
      "default_synth_config", [] { return format_synth_config(SynthConfig{}); });
  m.def(
      "default_train_config", [] { return format_train_config(TrainConfig{}); });

  m.def(
      "read_image_store",
      [](const std::filesystem::path& dir) {
        py::list out;
        for (const auto& r : read_image_store(dir)) {
          py::list seqs;
          for (const auto& s : r.sequences) {
            py::dict d;
            d["start_s"] = s.start_s;
            d["label"] = static_cast<int>(s.label);
            d["images"] = sequence_array(s);
            seqs.append(d);
          }
          py::list anns;
          for (const auto& a : r.annotations) anns.append(annotation_dict(a));
          py::dict d;
          d["recording"] = r.recording_ref;
          d["patient_id"] = r.patient_id;
          d["duration_s"] = r.duration_s;
          d["channels"] = r.channels;
          d["annotations"] = anns;
          d["sequences"] = seqs;
          out.append(d);
        }
        return out;
      },
      py::arg("dir"));

  m.def(
      "score",
      [](const py::list& predictions, const py::list& annotations, double guard_band_s) {
        std::vector<WindowPrediction> preds;
        for (const auto& item : predictions) {
          const auto d = item.cast<py::dict>();
          WindowPrediction p;
          p.recording_ref = d["recording"].cast<std::string>();
          p.patient_id = d.contains("patient_id") ? d["patient_id"].cast<std::string>()
                                                  : patient_for(p.recording_ref, "");
          p.start_s = d["start_s"].cast<double>();
          p.end_s = d.contains("end_s") ? d["end_s"].cast<double>() : p.start_s + kWindowSeconds;
          p.predicted = d["predicted"].cast<int>() ? Label::kSeizure : Label::kNonSeizure;
          p.truth = d["truth"].cast<int>() ? Label::kSeizure : Label::kNonSeizure;
          preds.push_back(std::move(p));
        }
        std::vector<SeizureAnnotation> ann;
        for (const auto& a : annotations) ann.push_back(annotation_from(a.cast<py::dict>()));
        return report_dict(score(preds, ann, {guard_band_s}));
      },
      py::arg("predictions"), py::arg("annotations"), py::arg("guard_band_s") = 30.0,
      "Score window predictions (dicts with recording, start_s, predicted, truth).");

  py::class_<EnsembleModel>(m, "Model")
      .def(py::init([](const std::filesystem::path& p) { return EnsembleModel::from_checkpoint(load_checkpoint(p)); }),
           py::arg("path"))
      .def_property_readonly("members", [](const EnsembleModel& e) { return e.members().size(); })
      .def_readonly("trained_patients", &EnsembleModel::trained_patients)
      .def_property_readonly("train_prior",
                             [](const EnsembleModel& e) { return py::make_tuple(e.train_prior()[0], e.train_prior()[1]); })
      .def(
          "predict",
          [](const EnsembleModel& e, const FloatArray& images) {
            const auto p = e.predict(sequence_from(images));
            return p[1];
          },
          py::arg("images"), "Seizure probability of one raw (30, 3, 16, 16) sequence.")
      .def(
          "occlusion",
          [](const EnsembleModel& e, const FloatArray& images, int size, int stride, float fill) {
            const auto map = occlusion_map(e, e.normalizer().applied(sequence_from(images)), {size, stride, fill, 1});
            py::array_t<double> out({map.rows, map.cols});
            std::copy(map.drops.begin(), map.drops.end(), out.mutable_data());
            return out;
          },
          py::arg("images"), py::arg("size") = 4, py::arg("stride") = 2, py::arg("fill") = 0.0f,
          "Occlusion drop map of one raw sequence.");
}
