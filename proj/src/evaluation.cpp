#include "szd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "szd/error.hpp"
#include "szd/random.hpp"

namespace szd {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct Interval {
  double start;
  double end;
};

// Union of possibly overlapping intervals; touching intervals join.
std::vector<Interval> union_of(std::vector<Interval> v) {
  std::sort(v.begin(), v.end(), [](const Interval& a, const Interval& b) {
    return a.start < b.start || (a.start == b.start && a.end < b.end);
  });
  std::vector<Interval> out;
  for (const auto& i : v) {
    if (!out.empty() && i.start <= out.back().end) {
      out.back().end = std::max(out.back().end, i.end);
    } else {
      out.push_back(i);
    }
  }
  return out;
}

bool overlaps(double a0, double a1, double b0, double b1) {
  return overlap_seconds(a0, a1, b0, b1) > 0.0;
}

}  // namespace

Tally& Tally::operator+=(const Tally& o) {
  seizures += o.seizures;
  detected_seizures += o.detected_seizures;
  events += o.events;
  false_positive_events += o.false_positive_events;
  tp_windows += o.tp_windows;
  fn_windows += o.fn_windows;
  fp_windows += o.fp_windows;
  tn_windows += o.tn_windows;
  seconds += o.seconds;
  return *this;
}

double Tally::window_sensitivity() const { return ratio(tp_windows, tp_windows + fn_windows); }
double Tally::window_specificity() const { return ratio(tn_windows, tn_windows + fp_windows); }
double Tally::event_sensitivity() const { return ratio(detected_seizures, seizures); }
double Tally::false_positives_per_hour() const {
  return seconds > 0.0 ? static_cast<double>(false_positive_events) / hours() : 0.0;
}

EvalReport& EvalReport::operator+=(const EvalReport& o) {
  total += o.total;
  for (const auto& [p, t] : o.per_patient) per_patient[p] += t;
  return *this;
}

std::vector<DetectionEvent> merge_events(std::span<const DetectionEvent> events) {
  std::vector<DetectionEvent> sorted(events.begin(), events.end());
  std::sort(sorted.begin(), sorted.end(), [](const DetectionEvent& a, const DetectionEvent& b) {
    if (a.recording_ref != b.recording_ref) return a.recording_ref < b.recording_ref;
    if (a.start_s != b.start_s) return a.start_s < b.start_s;
    return a.end_s < b.end_s;
  });
  std::vector<DetectionEvent> out;
  for (const auto& e : sorted) {
    if (!out.empty() && out.back().recording_ref == e.recording_ref &&
        e.start_s <= out.back().end_s) {
      out.back().end_s = std::max(out.back().end_s, e.end_s);
    } else {
      out.push_back(e);
    }
  }
  return out;
}

std::vector<DetectionEvent> detection_events(std::span<const WindowPrediction> predictions) {
  std::vector<DetectionEvent> raw;
  for (const auto& p : predictions) {
    if (p.predicted == Label::kSeizure) raw.push_back({p.recording_ref, p.start_s, p.end_s});
  }
  return merge_events(raw);
}

EvalReport score(std::span<const WindowPrediction> predictions,
                 std::span<const SeizureAnnotation> annotations, const ScoreOptions& options) {
  if (predictions.empty()) fail(ErrorKind::kEmptyPredictions, "no predictions to score");

  std::map<std::string, std::vector<const WindowPrediction*>> by_recording;
  for (const auto& p : predictions) {
    if (!(p.end_s > p.start_s)) fail(ErrorKind::kInvalidArgument, "prediction window has no length");
    by_recording[p.recording_ref].push_back(&p);
  }

  EvalReport report;
  for (const auto& [ref, preds] : by_recording) {
    const std::string& patient = preds.front()->patient_id;
    Tally t;
    std::vector<Interval> windows;
    std::vector<WindowPrediction> local;
    for (const auto* p : preds) {
      if (p->patient_id != patient) {
        fail(ErrorKind::kInvalidArgument, "recording " + ref + " has predictions for two patients");
      }
      windows.push_back({p->start_s, p->end_s});
      local.push_back(*p);
      const bool truth = p->truth == Label::kSeizure;
      const bool pred = p->predicted == Label::kSeizure;
      if (truth && pred) ++t.tp_windows;
      else if (truth) ++t.fn_windows;
      else if (pred) ++t.fp_windows;
      else ++t.tn_windows;
    }
    const auto coverage = union_of(windows);
    for (const auto& c : coverage) t.seconds += c.end - c.start;

    std::vector<const SeizureAnnotation*> ann;
    for (const auto& a : annotations) {
      if (recording_key(a.recording) == ref) ann.push_back(&a);
    }
    const auto events = detection_events(local);
    t.events = events.size();
    for (const auto* a : ann) {
      const bool covered = std::any_of(coverage.begin(), coverage.end(), [&](const Interval& c) {
        return overlaps(c.start, c.end, a->onset_s, a->offset_s);
      });
      if (!covered) continue;
      ++t.seizures;
      const bool hit = std::any_of(events.begin(), events.end(), [&](const DetectionEvent& e) {
        return overlaps(e.start_s, e.end_s, a->onset_s, a->offset_s);
      });
      if (hit) ++t.detected_seizures;
    }
    for (const auto& e : events) {
      const bool near_seizure = std::any_of(ann.begin(), ann.end(), [&](const SeizureAnnotation* a) {
        return overlaps(e.start_s, e.end_s, a->onset_s - options.guard_band_s,
                        a->offset_s + options.guard_band_s);
      });
      if (!near_seizure) ++t.false_positive_events;
    }
    report.total += t;
    report.per_patient[patient] += t;
  }
  return report;
}

std::vector<WindowPrediction> predict_recordings(const EnsembleModel& model,
                                                 std::span<const RecordingImages> recordings,
                                                 int jobs) {
  std::vector<WindowPrediction> out;
  for (const auto& rec : recordings) {
    const auto probs = model.predict_all(rec.sequences, jobs);
    for (std::size_t i = 0; i < rec.sequences.size(); ++i) {
      const auto& s = rec.sequences[i];
      WindowPrediction p;
      p.patient_id = rec.patient_id;
      p.recording_ref = rec.recording_ref;
      p.start_s = s.start_s;
      p.end_s = s.start_s + kWindowSeconds;
      p.probability = probs[i];
      p.predicted = probs[i][1] > probs[i][0] ? Label::kSeizure : Label::kNonSeizure;
      p.truth = s.label;
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<std::string> patients_of(std::span<const RecordingImages> corpus) {
  std::set<std::string> s;
  for (const auto& r : corpus) s.insert(r.patient_id);
  return {s.begin(), s.end()};
}

std::vector<Fold> leave_one_seizure_out_folds(std::span<const RecordingImages> corpus,
                                              const std::string& patient) {
  std::vector<std::size_t> recs;
  for (std::size_t r = 0; r < corpus.size(); ++r) {
    if (corpus[r].patient_id == patient) recs.push_back(r);
  }
  std::sort(recs.begin(), recs.end(), [&](std::size_t a, std::size_t b) {
    return corpus[a].recording_ref < corpus[b].recording_ref;
  });
  if (recs.empty()) fail(ErrorKind::kEmptySplit, "no recordings for patient " + patient);

  struct Seizure {
    double on, off;
    const SeizureAnnotation* ann;
  };
  std::vector<Seizure> seizures;
  std::vector<double> offset(corpus.size(), 0.0);
  double t0 = 0.0;
  for (auto r : recs) {
    offset[r] = t0;
    for (const auto& a : corpus[r].annotations) seizures.push_back({t0 + a.onset_s, t0 + a.offset_s, &a});
    t0 += corpus[r].duration_s;
  }
  std::stable_sort(seizures.begin(), seizures.end(),
                   [](const Seizure& a, const Seizure& b) { return a.on < b.on; });
  if (seizures.size() < 2) {
    fail(ErrorKind::kEmptySplit, "patient " + patient + " needs at least two seizures for leave-one-seizure-out");
  }

  std::vector<Fold> folds(seizures.size());
  for (std::size_t k = 0; k < seizures.size(); ++k) {
    folds[k].name = patient + "/seizure" + std::to_string(k + 1);
    folds[k].test_patient = patient;
    folds[k].test_annotations.push_back(*seizures[k].ann);
  }
  for (auto r : recs) {
    for (std::size_t i = 0; i < corpus[r].sequences.size(); ++i) {
      const double c = offset[r] + corpus[r].sequences[i].start_s + kWindowSeconds / 2;
      std::size_t best = 0;
      double best_d = 0.0;
      for (std::size_t k = 0; k < seizures.size(); ++k) {
        const double d = std::max({0.0, seizures[k].on - c, c - seizures[k].off});
        if (k == 0 || d < best_d) {
          best = k;
          best_d = d;
        }
      }
      for (std::size_t k = 0; k < seizures.size(); ++k) {
        (k == best ? folds[k].test : folds[k].train).push_back({r, i});
      }
    }
  }
  for (const auto& f : folds) {
    if (f.test.empty()) fail(ErrorKind::kEmptySplit, "fold " + f.name + " has no test windows");
  }
  return folds;
}

std::vector<Fold> leave_one_patient_out_folds(std::span<const RecordingImages> corpus) {
  std::vector<Fold> folds;
  for (const auto& patient : patients_of(corpus)) {
    Fold f;
    f.name = patient;
    f.test_patient = patient;
    f.holds_out_patient = true;
    for (std::size_t r = 0; r < corpus.size(); ++r) {
      auto& dst = corpus[r].patient_id == patient ? f.test : f.train;
      for (std::size_t i = 0; i < corpus[r].sequences.size(); ++i) dst.push_back({r, i});
      if (corpus[r].patient_id == patient) {
        f.test_annotations.insert(f.test_annotations.end(), corpus[r].annotations.begin(),
                                  corpus[r].annotations.end());
      }
    }
    folds.push_back(std::move(f));
  }
  return folds;
}

void check_fold(const Fold& fold, std::span<const RecordingImages> corpus) {
  std::set<WindowRef> train(fold.train.begin(), fold.train.end());
  for (const auto& w : fold.test) {
    if (train.count(w)) fail(ErrorKind::kDataLeak, "fold " + fold.name + ": window in both train and test");
    if (corpus[w.recording].patient_id != fold.test_patient) {
      fail(ErrorKind::kDataLeak, "fold " + fold.name + ": test window from another patient");
    }
  }
  if (fold.holds_out_patient) {
    for (const auto& w : fold.train) {
      if (corpus[w.recording].patient_id == fold.test_patient) {
        fail(ErrorKind::kDataLeak, "fold " + fold.name + ": withheld patient in training");
      }
    }
  }
}

ProtocolResult run_folds(std::span<const RecordingImages> corpus, std::span<const Fold> folds,
                         const FoldTrainer& trainer, const ScoreOptions& options, int jobs) {
  ProtocolResult result;
  for (const auto& fold : folds) {
    check_fold(fold, corpus);
    std::vector<ImageSequence> train;
    train.reserve(fold.train.size());
    for (const auto& w : fold.train) train.push_back(corpus[w.recording].sequences[w.sequence]);
    const EnsembleModel model = trainer(train, fold);
    train.clear();
    train.shrink_to_fit();
    if (fold.holds_out_patient &&
        std::find(model.trained_patients.begin(), model.trained_patients.end(), fold.test_patient) !=
            model.trained_patients.end()) {
      fail(ErrorKind::kDataLeak, "fold " + fold.name + ": model was trained on the withheld patient");
    }

    FoldResult fr;
    fr.name = fold.name;
    std::vector<ImageSequence> test;
    for (const auto& w : fold.test) test.push_back(corpus[w.recording].sequences[w.sequence]);
    const auto probs = model.predict_all(test, jobs);
    for (std::size_t i = 0; i < fold.test.size(); ++i) {
      const auto& rec = corpus[fold.test[i].recording];
      WindowPrediction p;
      p.patient_id = rec.patient_id;
      p.recording_ref = rec.recording_ref;
      p.start_s = test[i].start_s;
      p.end_s = test[i].start_s + kWindowSeconds;
      p.probability = probs[i];
      p.predicted = probs[i][1] > probs[i][0] ? Label::kSeizure : Label::kNonSeizure;
      p.truth = test[i].label;
      fr.predictions.push_back(std::move(p));
    }
    fr.report = score(fr.predictions, fold.test_annotations, options);
    result.report += fr.report;
    result.folds.push_back(std::move(fr));
  }
  return result;
}

ProtocolResult leave_one_seizure_out(std::span<const RecordingImages> corpus,
                                     const std::string& patient, const FoldTrainer& trainer,
                                     const ScoreOptions& options, int jobs) {
  const auto folds = leave_one_seizure_out_folds(corpus, patient);
  return run_folds(corpus, folds, trainer, options, jobs);
}

ProtocolResult leave_one_patient_out(std::span<const RecordingImages> corpus,
                                     const FoldTrainer& trainer, const ScoreOptions& options,
                                     int jobs) {
  const auto folds = leave_one_patient_out_folds(corpus);
  return run_folds(corpus, folds, trainer, options, jobs);
}

void AblationPoint::summarize() {
  auto stats = [&](auto get, double& mean, double& sd) {
    const auto n = static_cast<double>(repetitions.size());
    mean = sd = 0.0;
    if (repetitions.empty()) return;
    for (const auto& r : repetitions) mean += get(r);
    mean /= n;
    for (const auto& r : repetitions) sd += (get(r) - mean) * (get(r) - mean);
    sd = repetitions.size() > 1 ? std::sqrt(sd / (n - 1)) : 0.0;
  };
  stats([](const EvalReport& r) { return r.event_sensitivity(); }, mean_event_sensitivity,
        std_event_sensitivity);
  stats([](const EvalReport& r) { return r.window_sensitivity(); }, mean_window_sensitivity,
        std_window_sensitivity);
  stats([](const EvalReport& r) { return r.false_positive_events_per_hour(); }, mean_fp_per_hour,
        std_fp_per_hour);
}

std::vector<std::string> ablated_channels(std::span<const std::string> channels, int k,
                                          int repetition, std::uint64_t seed) {
  std::vector<std::string> pool(channels.begin(), channels.end());
  std::sort(pool.begin(), pool.end());
  if (k < 0 || static_cast<std::size_t>(k) + 3 > pool.size()) {
    fail(ErrorKind::kInvalidArgument, "cannot remove " + std::to_string(k) + " of " +
                                          std::to_string(pool.size()) + " channels");
  }
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(repetition)));
  rng.shuffle(pool);
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<AblationPoint> channel_ablation_curve(const EnsembleModel& model,
                                                  std::span<const LabeledRecording> data,
                                                  const ElectrodeLayout& layout,
                                                  const AblationOptions& options) {
  if (data.empty()) fail(ErrorKind::kEmptyPredictions, "no recordings to ablate");
  std::vector<std::string> channels;
  for (const auto& c : data.front().recording->channels) channels.push_back(c.label);

  std::vector<std::vector<WindowSequence>> windows;
  std::vector<SeizureAnnotation> annotations;
  for (const auto& d : data) {
    windows.push_back(segment(d.recording, d.annotations));
    annotations.insert(annotations.end(), d.annotations.begin(), d.annotations.end());
  }

  std::vector<AblationPoint> curve;
  for (int k = 0; k <= options.max_k; ++k) {
    AblationPoint point;
    point.k = k;
    const int reps = k == 0 ? 1 : options.repetitions;
    for (int rep = 0; rep < reps; ++rep) {
      ImagingOptions imaging;
      auto removed = ablated_channels(channels, k, rep, options.seed);
      imaging.excluded_channels.insert(removed.begin(), removed.end());
      std::vector<WindowPrediction> predictions;
      for (std::size_t r = 0; r < data.size(); ++r) {
        const auto& ws = windows[r];
        std::vector<WindowPrediction> local(ws.size());
        parallel_for(ws.size(), options.jobs, [&](std::size_t i) {
          auto seq = window_to_sequence(ws[i], layout, imaging);
          model.normalizer().apply(seq);
          const auto p = model.predict_normalized(seq);
          auto& out = local[i];
          out.patient_id = ws[i].patient_id;
          out.recording_ref = ws[i].recording_ref;
          out.start_s = ws[i].start_s;
          out.end_s = ws[i].end_s();
          out.probability = p;
          out.predicted = p[1] > p[0] ? Label::kSeizure : Label::kNonSeizure;
          out.truth = ws[i].label;
        });
        predictions.insert(predictions.end(), local.begin(), local.end());
      }
      point.removed.push_back(std::move(removed));
      point.repetitions.push_back(score(predictions, annotations, options.score));
    }
    point.summarize();
    curve.push_back(std::move(point));
  }
  return curve;
}

std::vector<AblationPoint> combine_ablation(std::span<const std::vector<AblationPoint>> curves) {
  std::vector<AblationPoint> out;
  if (curves.empty()) return out;
  out = curves.front();
  for (std::size_t c = 1; c < curves.size(); ++c) {
    if (curves[c].size() != out.size()) fail(ErrorKind::kShapeMismatch, "ablation curves differ in length");
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (curves[c][i].repetitions.size() != out[i].repetitions.size()) {
        fail(ErrorKind::kShapeMismatch, "ablation curves differ in repetitions");
      }
      for (std::size_t r = 0; r < out[i].repetitions.size(); ++r) {
        out[i].repetitions[r] += curves[c][i].repetitions[r];
      }
    }
  }
  for (auto& p : out) p.summarize();
  return out;
}

namespace {

constexpr const char* kReportHeader =
    "patient,seizures,detected,event_sensitivity,events,fp_events,seconds,hours,fp_per_hour,"
    "tp_windows,fn_windows,fp_windows,tn_windows,window_sensitivity,window_specificity";

std::string tally_row(const std::string& name, const Tally& t) {
  std::ostringstream os;
  os << name << ',' << t.seizures << ',' << t.detected_seizures << ','
     << fmt(t.event_sensitivity()) << ',' << t.events << ',' << t.false_positive_events << ','
     << fmt(t.seconds, 3) << ',' << fmt(t.hours()) << ',' << fmt(t.false_positives_per_hour())
     << ',' << t.tp_windows << ',' << t.fn_windows << ',' << t.fp_windows << ',' << t.tn_windows
     << ',' << fmt(t.window_sensitivity()) << ',' << fmt(t.window_specificity()) << '\n';
  return os.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string report_csv(const EvalReport& report) {
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto& [p, t] : report.per_patient) out += tally_row(p, t);
  out += tally_row("TOTAL", report.total);
  return out;
}

EvalReport parse_report_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  EvalReport report;
  bool saw_total = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != kReportHeader) fail(ErrorKind::kUnparseableLine, "report line 1: unexpected header");
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 15) {
      fail(ErrorKind::kUnparseableLine, "report line " + std::to_string(line_no) + ": expected 15 fields");
    }
    Tally t;
    try {
      t.seizures = std::stoul(f[1]);
      t.detected_seizures = std::stoul(f[2]);
      t.events = std::stoul(f[4]);
      t.false_positive_events = std::stoul(f[5]);
      t.seconds = std::stod(f[6]);
      t.tp_windows = std::stoul(f[9]);
      t.fn_windows = std::stoul(f[10]);
      t.fp_windows = std::stoul(f[11]);
      t.tn_windows = std::stoul(f[12]);
    } catch (const std::exception&) {
      fail(ErrorKind::kUnparseableLine, "report line " + std::to_string(line_no) + ": bad number");
    }
    if (f[0] == "TOTAL") {
      report.total = t;
      saw_total = true;
    } else {
      report.per_patient[f[0]] = t;
    }
  }
  if (!saw_total) fail(ErrorKind::kUnparseableLine, "report has no TOTAL row");
  return report;
}

std::string report_summary(const EvalReport& report) {
  const auto& t = report.total;
  std::ostringstream os;
  os << "patients: " << report.per_patient.size() << "\n"
     << "hours_evaluated: " << fmt(t.hours()) << "\n"
     << "seizures: " << t.seizures << "\n"
     << "detected_seizures: " << t.detected_seizures << "\n"
     << "event_sensitivity: " << fmt(t.event_sensitivity()) << "\n"
     << "false_positive_events: " << t.false_positive_events << "\n"
     << "false_positive_events_per_hour: " << fmt(t.false_positives_per_hour()) << "\n"
     << "window_sensitivity: " << fmt(t.window_sensitivity()) << "\n"
     << "window_specificity: " << fmt(t.window_specificity()) << "\n"
     << "confusion: {tp: " << t.tp_windows << ", fn: " << t.fn_windows << ", fp: " << t.fp_windows
     << ", tn: " << t.tn_windows << "}\n";
  return os.str();
}

std::string ablation_csv(std::span<const AblationPoint> curve) {
  std::ostringstream os;
  os << "k,repetitions,event_sensitivity_mean,event_sensitivity_std,window_sensitivity_mean,"
        "window_sensitivity_std,fp_per_hour_mean,fp_per_hour_std,removed\n";
  for (const auto& p : curve) {
    std::string removed;
    for (std::size_t r = 0; r < p.removed.size(); ++r) {
      if (r) removed += ';';
      for (std::size_t i = 0; i < p.removed[r].size(); ++i) {
        if (i) removed += '+';
        removed += p.removed[r][i];
      }
    }
    os << p.k << ',' << p.repetitions.size() << ',' << fmt(p.mean_event_sensitivity) << ','
       << fmt(p.std_event_sensitivity) << ',' << fmt(p.mean_window_sensitivity) << ','
       << fmt(p.std_window_sensitivity) << ',' << fmt(p.mean_fp_per_hour) << ','
       << fmt(p.std_fp_per_hour) << ',' << removed << '\n';
  }
  return os.str();
}

std::string predictions_csv(std::span<const WindowPrediction> predictions) {
  std::ostringstream os;
  os << "patient,recording,start_s,end_s,p_seizure,predicted,truth\n";
  for (const auto& p : predictions) {
    os << p.patient_id << ',' << p.recording_ref << ',' << fmt(p.start_s, 3) << ','
       << fmt(p.end_s, 3) << ',' << fmt(p.probability[1], 9) << ','
       << static_cast<int>(p.predicted) << ',' << static_cast<int>(p.truth) << '\n';
  }
  return os.str();
}

}  // namespace szd
