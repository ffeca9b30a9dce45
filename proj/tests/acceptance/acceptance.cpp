// Acceptance suite: one PASS/FAIL line per criterion. Thresholds are pinned
// below and never read from the command line.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../support/gradcheck.hpp"
#include "../support/score_oracle.hpp"
#include "CLI11.hpp"
#include "szd/error.hpp"
#include "szd/evaluation.hpp"
#include "szd/imaging.hpp"
#include "szd/io_util.hpp"
#include "szd/occlusion.hpp"
#include "szd/pipeline.hpp"
#include "szd/synth.hpp"
#include "szd/training.hpp"

using namespace szd;
namespace fs = std::filesystem;

namespace {

// ---- pinned thresholds ----
constexpr double kGradTolerance = 1e-3;
constexpr int kGradMinProbes = 10;
constexpr double kBandTolerance = 1e-6;
constexpr double kProjectionTolerance = 1e-12;
constexpr double kNodeTolerance = 1e-6;  // relative
constexpr double kConstantFieldTolerance = 1e-6;
constexpr int kOverfitSequences = 60;
constexpr double kOverfitGain = 10.0;
constexpr int kOverfitEpochs = 30;
constexpr double kOverfitAccuracy = 0.95;
constexpr double kMinEventSensitivity = 0.8;
constexpr double kMaxFpPerHour = 1.0;
constexpr double kMinOracleAuc = 0.9;
constexpr double kMaxAblationDrop = 0.10;
constexpr double kMinLocalizationRate = 0.8;
constexpr int kOracleLayouts = 1000;
constexpr int kCaseCount = 24;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void progress(const std::string& msg) { std::cerr << "  .. " << msg << std::endl; }

// ---- criterion 1 ----
Outcome gradient_correctness() {
  Outcome o{true, {}};
  double worst = 0.0;
  int probes = 0;
  std::string worst_name;
  for (const auto& c : testing::primitive_checks()) {
    const auto r = c.run();
    probes += r.probes;
    if (r.probes < kGradMinProbes || r.max_rel_error > kGradTolerance) o.pass = false;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = c.name;
    }
  }
  const auto model = testing::model_gradient_check(11, kGradMinProbes, testing::kPerTensorEps, true);
  const auto head = testing::pretrain_gradient_check(13, kGradMinProbes, testing::kPerTensorEps);
  for (const auto& r : {model, head}) {
    if (r.max_rel_error > kGradTolerance) o.pass = false;
  }
  o.detail = std::to_string(testing::primitive_checks().size()) + " primitives, " + std::to_string(probes) +
             " probes, worst " + fmt("%.2e", worst) + " (" + worst_name + "); model " +
             std::to_string(model.probes) + " probes worst " + fmt("%.2e", model.max_rel_error) +
             "; pretrain head worst " + fmt("%.2e", head.max_rel_error) + "; limit 1e-3";
  return o;
}

// ---- criterion 2 ----
Outcome representation_oracles() {
  Outcome o{true, {}};
  std::ostringstream d;
  double band_err = 0.0, leak = 0.0;
  for (int hz = 1; hz < 49; ++hz) {
    std::vector<double> x(256);
    for (int i = 0; i < 256; ++i) x[i] = std::sin(2 * std::numbers::pi * hz * i / 256.0);
    const auto b = band_magnitudes(x, 256);
    const int band = hz < 7 ? 0 : hz < 14 ? 1 : 2;
    for (int k = 0; k < kBandCount; ++k) {
      if (k == band) band_err = std::max(band_err, std::abs(b[k] - 128.0));
      else leak = std::max(leak, b[k]);
    }
  }
  if (band_err > kBandTolerance || leak > kBandTolerance) o.pass = false;
  d << "band |b-N/2| " << fmt("%.1e", band_err) << ", leak " << fmt("%.1e", leak);

  double proj = 0.0;
  const auto pole = polar_project({0, 0, 1});
  proj = std::max({proj, std::abs(pole.u), std::abs(pole.v)});
  for (int i = 0; i < 36; ++i) {
    const double phi = i * std::numbers::pi / 18;
    const auto e = polar_project({std::cos(phi), std::sin(phi), 0});
    proj = std::max(proj, std::abs(std::hypot(e.u, e.v) - std::numbers::pi / 2));
    const double t = 0.3 + 0.02 * i;
    const Vec3 a{std::sin(t) * std::cos(phi), std::sin(t) * std::sin(phi), std::cos(t)};
    const auto pa = polar_project(a), pb = polar_project({a.x, -a.y, a.z});
    proj = std::max({proj, std::abs(pa.u - pb.u), std::abs(pa.v + pb.v)});
  }
  const auto& L = ElectrodeLayout::standard_1020();
  const std::pair<const char*, const char*> mirrors[] = {{"FP1", "FP2"}, {"F7", "F8"}, {"F3", "F4"},
                                                         {"T7", "T8"},   {"C3", "C4"}, {"P7", "P8"},
                                                         {"P3", "P4"},   {"O1", "O2"}};
  for (auto [l, r] : mirrors) {
    const auto a = L.projected(l), b = L.projected(r);
    proj = std::max({proj, std::abs(a.u - b.u), std::abs(a.v + b.v)});
  }
  if (proj > kProjectionTolerance) o.pass = false;
  d << "; projection " << fmt("%.1e", proj);

  std::vector<Point2> pts;
  for (const auto& n : L.names()) pts.push_back(L.projected(n));
  CubicRbf rbf(pts);
  Rng rng(1);
  double node = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(pts.size());
    for (auto& x : v) x = rng.uniform(-100, 100);
    const auto coef = rbf.coefficients(v);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      node = std::max(node, std::abs(rbf.evaluate(coef, pts[i]) - v[i]) / std::max(1.0, std::abs(v[i])));
    }
  }
  double flat = 0.0;
  for (double c : {-3.0, 0.5, 250.0}) {
    std::vector<std::array<double, kBandCount>> vals(pts.size(), {c, c, c});
    const auto img = interpolate_image(pts, vals, L.grid_extent());
    for (float p : img.pixels) flat = std::max(flat, std::abs(p - c) / std::abs(c));
  }
  if (node > kNodeTolerance || flat > kConstantFieldTolerance) o.pass = false;
  d << "; node rel " << fmt("%.1e", node) << ", constant field rel " << fmt("%.1e", flat);
  o.detail = d.str();
  return o;
}

// ---- shared synthetic corpus (criteria 4-7) ----

struct Corpus {
  SynthConfig config;
  std::vector<RecordingImages> recordings;
  std::size_t annotations = 0;
  double oracle_auc = 0.0;
};

double auc(std::vector<std::pair<double, int>> v) {
  std::sort(v.begin(), v.end());
  double np = 0, nn = 0, rank_sum = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j].first == v[i].first) ++j;
    const double mid = (i + 1 + j) / 2.0;  // average rank of ties
    for (std::size_t k = i; k < j; ++k) {
      if (v[k].second) {
        ++np;
        rank_sum += mid;
      } else {
        ++nn;
      }
    }
    i = j;
  }
  return (rank_sum - np * (np + 1) / 2) / (np * nn);
}

// Band-power threshold oracle: per window, the largest band-1 (0-7 Hz)
// magnitude of any one-second block on any channel, relative to that
// channel's median over the recording.
std::vector<std::pair<double, int>> oracle_scores(const Recording& rec, std::span<const WindowSequence> windows) {
  const auto fs = static_cast<std::size_t>(rec.sample_rate_hz);
  const auto seconds = static_cast<std::size_t>(rec.duration_s);
  std::vector<std::vector<double>> band(rec.channels.size(), std::vector<double>(seconds));
  std::vector<double> median(rec.channels.size());
  for (std::size_t c = 0; c < rec.channels.size(); ++c) {
    for (std::size_t s = 0; s < seconds; ++s) {
      band[c][s] = band_magnitudes(std::span<const double>(rec.channels[c].samples).subspan(s * fs, fs),
                                   rec.sample_rate_hz)[0];
    }
    auto v = band[c];
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    median[c] = v[v.size() / 2];
  }
  std::vector<std::pair<double, int>> out;
  for (const auto& w : windows) {
    double best = 0.0;
    const auto s0 = static_cast<std::size_t>(w.start_s);
    for (std::size_t c = 0; c < band.size(); ++c) {
      for (int k = 0; k < kSubWindows; ++k) best = std::max(best, band[c][s0 + k] / median[c]);
    }
    out.push_back({best, w.label == Label::kSeizure ? 1 : 0});
  }
  return out;
}

std::vector<LabeledRecording> labeled(const SynthPatient& p) {
  std::vector<LabeledRecording> out;
  for (const auto& r : p.recordings) {
    LabeledRecording l;
    l.recording = std::make_shared<const Recording>(r);
    l.annotations = annotations_for(p.annotations, r);
    out.push_back(std::move(l));
  }
  return out;
}

Corpus build_corpus(int jobs) {
  Corpus c;
  const auto& layout = ElectrodeLayout::standard_1020();
  std::vector<std::pair<double, int>> scores;
  for (int i = 0; i < c.config.n_patients; ++i) {
    const auto p = generate_patient(c.config, i, layout);
    c.annotations += p.annotations.size();
    for (const auto& l : labeled(p)) {
      const auto s = oracle_scores(*l.recording, segment(l.recording, l.annotations));
      scores.insert(scores.end(), s.begin(), s.end());
      c.recordings.push_back(image_recording(l, layout, {}, kWindowSeconds, jobs));
    }
    progress("imaged " + p.patient_id);
  }
  c.oracle_auc = auc(scores);
  return c;
}

int patient_index(const std::string& id) { return std::stoi(id.substr(3)) - 1; }

struct LopoRun {
  ProtocolResult result;
  std::map<std::string, EnsembleModel> models;  // by held-out patient
  double seconds = 0.0;
};

LopoRun run_lopo(const Corpus& corpus, int jobs) {
  LopoRun run;
  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig cfg;  // defaults: pretraining, 3-member ensemble
  cfg.jobs = jobs;
  FoldTrainer trainer = [&](std::span<const ImageSequence> train, const Fold& fold) {
    progress("fold " + fold.name + ": " + std::to_string(train.size()) + " training sequences");
    auto m = train_detector(train, cfg);
    run.models[fold.test_patient] = m;
    return m;
  };
  run.result = leave_one_patient_out(corpus.recordings, trainer, {}, jobs);
  run.seconds = seconds_since(t0);
  return run;
}

// ---- criterion 3 ----
Outcome overfit_sanity(int jobs) {
  const auto t0 = std::chrono::steady_clock::now();
  SynthConfig sc;
  sc.seizure_amplitude_gain = kOverfitGain;
  const auto& layout = ElectrodeLayout::standard_1020();
  // Half seizure windows, half background windows spread over the recordings.
  std::vector<WindowSequence> pos, neg;
  for (int i = 0; i < sc.n_patients && pos.size() < kOverfitSequences / 2; ++i) {
    for (const auto& l : labeled(generate_patient(sc, i, layout))) {
      const auto ws = segment(l.recording, l.annotations);
      for (std::size_t k = 0; k < ws.size(); ++k) {
        if (ws[k].label == Label::kSeizure && pos.size() < kOverfitSequences / 2) pos.push_back(ws[k]);
        else if (ws[k].label == Label::kNonSeizure && k % 23 == 0) neg.push_back(ws[k]);
      }
    }
  }
  if (pos.size() < kOverfitSequences / 2) return {false, "generator produced too few seizure windows"};
  neg.resize(kOverfitSequences / 2);
  std::vector<WindowSequence> chosen = pos;
  chosen.insert(chosen.end(), neg.begin(), neg.end());
  auto seqs = windows_to_sequences(chosen, layout);
  const auto normalizer = Normalizer::fit(seqs);
  for (auto& s : seqs) normalizer.apply(s);
  SequenceSet set;
  for (const auto& s : seqs) set.add(s);

  TrainConfig cfg;
  cfg.max_epochs = kOverfitEpochs;
  cfg.patience_epochs = 0;
  cfg.jobs = jobs;
  int reached = -1;
  const auto r = train_loop(initialize_model(cfg.seed), set, set, cfg, [&](const EpochRecord& e) {
    if (reached < 0 && e.validation_accuracy >= kOverfitAccuracy) reached = e.epoch;
  });
  double best = 0.0;
  for (const auto& h : r.history) best = std::max(best, h.validation_accuracy);
  const double final_acc = accuracy(r.params, set, jobs);
  Outcome o;
  o.pass = reached >= 0 && final_acc >= kOverfitAccuracy;
  o.detail = std::to_string(seqs.size()) + " sequences, gain 10: training accuracy " + fmt("%.3f", final_acc) +
             (reached >= 0 ? " (>= 0.95 first at epoch " + std::to_string(reached) + ")" : " (never >= 0.95)") +
             ", limit 0.95 within 30 epochs, " + fmt("%.0f s", seconds_since(t0));
  return o;
}

// ---- criterion 4 ----
Outcome detection(const Corpus& corpus, const LopoRun& run) {
  const auto& t = run.result.report.total;
  Outcome o;
  o.pass = t.event_sensitivity() >= kMinEventSensitivity && t.false_positives_per_hour() <= kMaxFpPerHour &&
           corpus.oracle_auc >= kMinOracleAuc;
  o.detail = "LOPO over " + std::to_string(run.result.folds.size()) + " patients: event sensitivity " +
             fmt("%.3f", t.event_sensitivity()) + " (" + std::to_string(t.detected_seizures) + "/" +
             std::to_string(t.seizures) + ", limit 0.8), FP " + fmt("%.3f", t.false_positives_per_hour()) +
             "/h over " + fmt("%.1f", t.hours()) + " h (limit 1.0), band-power oracle AUC " +
             fmt("%.3f", corpus.oracle_auc) + " (limit 0.9), " + fmt("%.0f s", run.seconds);
  return o;
}

// ---- criterion 5 ----
Outcome ablation(const Corpus& corpus, const LopoRun& run, int jobs) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& layout = ElectrodeLayout::standard_1020();
  std::vector<std::vector<AblationPoint>> curves;
  AblationOptions opt;
  opt.max_k = 1;
  opt.repetitions = 3;
  opt.seed = 1;
  opt.jobs = jobs;
  for (const auto& [patient, model] : run.models) {
    const auto data = labeled(generate_patient(corpus.config, patient_index(patient), layout));
    curves.push_back(channel_ablation_curve(model, data, layout, opt));
    progress("ablation " + patient);
  }
  if (curves.empty()) return {false, "no fold models"};
  const auto curve = combine_ablation(curves);
  const double s0 = curve[0].mean_event_sensitivity, s1 = curve[1].mean_event_sensitivity;
  Outcome o;
  o.pass = s0 - s1 <= kMaxAblationDrop;
  o.detail = "event sensitivity k=0 " + fmt("%.3f", s0) + ", k=1 " + fmt("%.3f", s1) + " (mean of " +
             std::to_string(opt.repetitions) + " channel draws, per-fold models), drop " +
             fmt("%.3f", s0 - s1) + " (limit 0.10), FP/h k=1 " + fmt("%.3f", curve[1].mean_fp_per_hour) + ", " +
             fmt("%.0f s", seconds_since(t0));
  return o;
}

// ---- criterion 6 ----
Outcome localization(const Corpus& corpus, const LopoRun& run, int jobs) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& layout = ElectrodeLayout::standard_1020();
  const double extent = layout.grid_extent();
  OcclusionOptions opt;
  opt.jobs = jobs;
  int hits = 0, total = 0;
  for (const auto& fold : run.result.folds) {
    const auto& model = run.models.at(fold.name);
    const auto focus = synth_focus(corpus.config, patient_index(fold.name));
    for (const auto& p : fold.predictions) {
      if (p.truth != Label::kSeizure || p.predicted != Label::kSeizure) continue;
      const ImageSequence* seq = nullptr;
      for (const auto& r : corpus.recordings) {
        if (r.recording_ref != p.recording_ref) continue;
        for (const auto& s : r.sequences) {
          if (s.start_s == p.start_s) seq = &s;
        }
      }
      if (!seq) return {false, "prediction without a sequence"};
      const auto map = occlusion_map(model, model.normalizer().applied(*seq), opt);
      double d = 1e9;
      for (const auto& e : focus) d = std::min(d, argmax_distance(map, layout.projected(e), extent));
      ++total;
      hits += d <= opt.stride;
    }
  }
  const double rate = total ? static_cast<double>(hits) / total : 0.0;
  Outcome o;
  o.pass = total > 0 && rate >= kMinLocalizationRate;
  o.detail = std::to_string(hits) + "/" + std::to_string(total) +
             " correctly classified seizure windows have the occlusion argmax within one stride (2 px) of the "
             "focus electrode: " +
             fmt("%.3f", rate) + " (limit 0.8), " + fmt("%.0f s", seconds_since(t0));
  return o;
}

// ---- criterion 7 ----

// Header-only scan of an EDF file: (patient key, duration in seconds).
std::optional<double> edf_duration(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  char h[256];
  if (!in.read(h, 256)) return std::nullopt;
  try {
    const double records = std::stod(std::string(h + 236, 8));
    const double seconds = std::stod(std::string(h + 244, 8));
    return records * seconds;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

// Every window of `corpus` tested exactly once across LOPO folds, no fold
// trains on its patient, seizure totals add up.
std::string check_lopo_structure(std::span<const RecordingImages> corpus, bool& ok) {
  const auto folds = leave_one_patient_out_folds(corpus);
  std::set<WindowRef> tested;
  std::size_t windows = 0, annotations = 0, fold_annotations = 0;
  for (const auto& r : corpus) {
    windows += r.sequences.size();
    annotations += r.annotations.size();
  }
  for (const auto& f : folds) {
    try {
      check_fold(f, corpus);
    } catch (const Error&) {
      ok = false;
    }
    for (const auto& w : f.test) ok &= tested.insert(w).second;
    ok &= f.train.size() + f.test.size() == windows;
    fold_annotations += f.test_annotations.size();
  }
  ok &= tested.size() == windows && fold_annotations == annotations && folds.size() == patients_of(corpus).size();
  return std::to_string(folds.size()) + " LOPO folds";
}

Outcome bookkeeping(const Corpus& corpus, const LopoRun* run) {
  bool ok = true;
  std::ostringstream d;
  d << "synthetic: " << check_lopo_structure(corpus.recordings, ok);

  // LOSO per synthetic patient: one withheld seizure per fold, tests
  // partition the patient's windows, oracle predictions detect each seizure once.
  std::size_t loso_folds = 0, detected = 0, counted = 0;
  for (const auto& patient : patients_of(corpus.recordings)) {
    const auto folds = leave_one_seizure_out_folds(corpus.recordings, patient);
    std::set<WindowRef> tested;
    std::size_t windows = 0;
    for (const auto& r : corpus.recordings) {
      if (r.patient_id == patient) windows += r.sequences.size();
    }
    for (const auto& f : folds) {
      try {
        check_fold(f, corpus.recordings);
      } catch (const Error&) {
        ok = false;
      }
      ok &= f.test_annotations.size() == 1;
      std::vector<WindowPrediction> preds;
      for (const auto& w : f.test) {
        ok &= tested.insert(w).second;
        const auto& r = corpus.recordings[w.recording];
        const auto& s = r.sequences[w.sequence];
        WindowPrediction p;
        p.patient_id = r.patient_id;
        p.recording_ref = r.recording_ref;
        p.start_s = s.start_s;
        p.end_s = s.start_s + kWindowSeconds;
        p.truth = p.predicted = s.label;
        preds.push_back(p);
      }
      const auto rep = score(preds, f.test_annotations);
      detected += rep.total.detected_seizures;
      counted += rep.total.seizures;
      ok &= rep.total.fn_windows == 0 && rep.total.fp_windows == 0;
    }
    ok &= tested.size() == windows;
    loso_folds += folds.size();
  }
  ok &= loso_folds == corpus.annotations && detected == corpus.annotations && counted == corpus.annotations;
  d << ", " << loso_folds << " LOSO folds (" << detected << "/" << corpus.annotations << " seizures, TP+FN = count)";

  if (run) {
    std::size_t seizures = 0, tp_fn = 0, labelled = 0;
    for (const auto& f : run->result.folds) {
      seizures += f.report.total.seizures;
      tp_fn += f.report.total.tp_windows + f.report.total.fn_windows;
      for (const auto& p : f.predictions) labelled += p.truth == Label::kSeizure;
    }
    ok &= seizures == corpus.annotations && tp_fn == labelled;
    d << ", trained LOPO counted " << seizures << "/" << corpus.annotations << " seizures";
  }

  // 24 cases from 23 people: each case is its own fold.
  std::vector<RecordingImages> cases;
  const char* real = std::getenv("SZD_CHBMIT_DIR");
  std::string source = "structural 24-case index";
  if (real && fs::is_directory(real)) {
    for (const auto& e : fs::recursive_directory_iterator(real)) {
      if (e.path().extension() != ".edf") continue;
      const auto dur = edf_duration(e.path());
      if (!dur) continue;
      RecordingImages r;
      r.recording_ref = recording_key(e.path().filename().string());
      r.patient_id = patient_for(r.recording_ref, "");
      r.duration_s = *dur;
      cases.push_back(std::move(r));
    }
    source = "CHB-MIT index from " + std::string(real);
  } else {
    for (int c = 1; c <= kCaseCount; ++c) {
      char id[16];
      std::snprintf(id, sizeof id, "chb%02d", c);
      for (int k = 1; k <= 2; ++k) {
        RecordingImages r;
        r.patient_id = id;
        r.recording_ref = std::string(id) + "_0" + std::to_string(k);
        r.duration_s = 3600;
        cases.push_back(std::move(r));
      }
    }
  }
  std::sort(cases.begin(), cases.end(),
            [](const RecordingImages& a, const RecordingImages& b) { return a.recording_ref < b.recording_ref; });
  for (auto& r : cases) {
    for (std::size_t k = 0; k < window_count(r.duration_s, kWindowSeconds); ++k) {
      ImageSequence s;
      s.start_s = kWindowSeconds * static_cast<double>(k);
      r.sequences.push_back(std::move(s));
    }
  }
  const auto case_folds = check_lopo_structure(cases, ok);
  ok &= patients_of(cases).size() == static_cast<std::size_t>(kCaseCount);
  d << "; " << source << ": " << case_folds;
  return {ok, d.str()};
}

// ---- criterion 8 ----
Outcome metric_oracle() {
  Rng rng(2024);
  int mismatches = 0;
  for (int i = 0; i < kOracleLayouts; ++i) {
    const auto layout = testing::random_layout(rng);
    for (double guard : {30.0, 0.0}) {
      if (!testing::same_report(score(layout.predictions, layout.annotations, {guard}),
                                testing::oracle_score(layout, guard))) {
        ++mismatches;
      }
    }
  }
  return {mismatches == 0, std::to_string(kOracleLayouts) + " random layouts x 2 guard settings, " +
                               std::to_string(mismatches) + " mismatches (limit 0)"};
}

// ---- criterion 9 ----
int run_command(const std::string& cmd) {
  const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
  return rc;
}

Outcome determinism(const std::string& cli, const fs::path& workdir) {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream d;
  bool ok = true;

  // In-process: train twice, compare checkpoint bytes and report text.
  {
    SynthConfig sc;
    sc.n_patients = 2;
    sc.hours_per_patient = 0.25;
    sc.recording_hours = 0.25;
    sc.seizures_per_patient = 1;
    sc.seizure_amplitude_gain = 6;
    const auto& layout = ElectrodeLayout::standard_1020();
    std::vector<RecordingImages> corpus;
    for (int i = 0; i < sc.n_patients; ++i) {
      for (const auto& l : labeled(generate_patient(sc, i, layout))) corpus.push_back(image_recording(l, layout));
    }
    TrainConfig cfg;
    cfg.max_epochs = 2;
    cfg.pretrain_epochs = 1;
    cfg.ensemble_size = 2;
    cfg.batch_size = 16;
    auto once = [&] {
      const auto train = corpus[0].sequences;
      const auto m = train_detector(train, cfg);
      const auto test = std::span<const RecordingImages>(corpus).subspan(1);
      std::vector<SeizureAnnotation> ann = corpus[1].annotations;
      return std::make_pair(serialize_checkpoint(m.to_checkpoint()),
                            report_csv(score(predict_recordings(m, test), ann)));
    };
    const auto a = once(), b = once();
    const bool same = a == b;
    ok &= same;
    d << "in-process checkpoint+report " << (same ? "identical" : "DIFFER");
  }

  if (cli.empty()) {
    d << "; CLI not built, skipped";
  } else {
    const std::vector<std::string> outputs{"model.szgd", "report.csv", "summary.txt", "predictions.csv"};
    std::map<std::string, std::string> first;
    for (const char* run : {"run_a", "run_b"}) {
      const fs::path dir = workdir / "determinism" / run;
      fs::remove_all(dir);
      fs::create_directories(dir);
      write_file(dir / "synth.cfg",
                 "n_patients = 2\nhours_per_patient = 0.25\nrecording_hours = 0.25\nseizures_per_patient = 1\n"
                 "seizure_amplitude_gain = 6\nseed = 5\n");
      write_file(dir / "train.cfg",
                 "batch_size = 16\nmax_epochs = 2\npretrain_epochs = 1\nensemble_size = 2\nseed = 9\n");
      const std::string q = " -q ";
      const std::string d_ = dir.string();
      const std::vector<std::string> steps{
          cli + q + "synth --config " + d_ + "/synth.cfg --out " + d_ + "/edf",
          cli + q + "images --in " + d_ + "/edf --out " + d_ + "/img --jobs 1",
          cli + q + "train --data " + d_ + "/img --out " + d_ + "/model.szgd --patients syn01 --config " + d_ +
              "/train.cfg --jobs 1",
          cli + q + "eval --mode holdout --data " + d_ + "/img --model " + d_ + "/model.szgd --report " + d_ +
              "/report.csv --summary " + d_ + "/summary.txt --predictions " + d_ + "/predictions.csv --jobs 1"};
      for (const auto& s : steps) {
        if (run_command(s) != 0) {
          ok = false;
          d << "; command failed: " << s;
          break;
        }
      }
      for (const auto& f : outputs) {
        std::string bytes;
        try {
          bytes = read_file(dir / f);
        } catch (const Error&) {
          ok = false;
        }
        if (std::string(run) == "run_a") {
          first[f] = bytes;
        } else if (first[f] != bytes || bytes.empty()) {
          ok = false;
          d << "; " << f << " differs";
        }
      }
    }
    d << "; CLI synth/images/train/eval twice with --jobs 1: " << outputs.size() << " outputs compared";
  }
  d << ", " << fmt("%.0f s", seconds_since(t0));
  return {ok, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string workdir = "acceptance_work";
  std::string cli;
  std::vector<int> only;
  int jobs = 1;
  app.add_option("--workdir", workdir, "scratch directory");
  app.add_option("--cli", cli, "path to the szd executable (criterion 9)");
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);
  const std::set<int> want(only.begin(), only.end());
  auto enabled = [&](int c) { return want.empty() || want.count(c); };

  int failed = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << id << " " << name << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail
              << " [" << fmt("%.1f", seconds_since(t0)) << " s]" << std::endl;
  };

  if (enabled(1)) report(1, "gradient_correctness", gradient_correctness);
  if (enabled(2)) report(2, "representation_oracles", representation_oracles);
  if (enabled(3)) report(3, "overfit_sanity", [&] { return overfit_sanity(jobs); });

  std::optional<Corpus> corpus;
  std::optional<LopoRun> lopo;
  const bool need_corpus = enabled(4) || enabled(5) || enabled(6) || enabled(7);
  const bool need_lopo = enabled(4) || enabled(5) || enabled(6);
  if (need_corpus) {
    try {
      corpus = build_corpus(jobs);
      if (need_lopo) lopo = run_lopo(*corpus, jobs);
    } catch (const std::exception& e) {
      std::cerr << "synthetic experiment failed: " << e.what() << std::endl;
    }
  }
  auto with_lopo = [&](auto fn) {
    return [&, fn]() -> Outcome {
      if (!corpus || !lopo) return {false, "synthetic LOPO run did not complete"};
      return fn();
    };
  };
  if (enabled(4)) report(4, "synthetic_detection", with_lopo([&] { return detection(*corpus, *lopo); }));
  if (enabled(5)) report(5, "missing_channel_robustness", with_lopo([&] { return ablation(*corpus, *lopo, jobs); }));
  if (enabled(6)) report(6, "occlusion_localization", with_lopo([&] { return localization(*corpus, *lopo, jobs); }));
  if (enabled(7)) {
    report(7, "protocol_bookkeeping", [&]() -> Outcome {
      if (!corpus) return {false, "synthetic corpus was not built"};
      return bookkeeping(*corpus, lopo ? &*lopo : nullptr);
    });
  }
  if (enabled(8)) report(8, "metric_oracle", metric_oracle);
  if (enabled(9)) report(9, "determinism", [&] { return determinism(cli, workdir); });

  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed" : "acceptance: all criteria passed")
            << std::endl;
  return failed ? 1 : 0;
}
