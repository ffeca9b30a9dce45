#pragma once

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "szd/edf_io.hpp"
#include "szd/image_store.hpp"
#include "szd/model.hpp"
#include "szd/training.hpp"

namespace szd {

struct WindowPrediction {
  std::string patient_id;
  std::string recording_ref;
  double start_s = 0.0;
  double end_s = 0.0;
  ProbPair probability{1.0, 0.0};
  Label predicted = Label::kNonSeizure;
  Label truth = Label::kNonSeizure;
};

struct DetectionEvent {
  std::string recording_ref;
  double start_s = 0.0;
  double end_s = 0.0;
};

struct ScoreOptions {
  // Events within this many seconds of an annotated seizure are not false
  // positives. 0 disables the guard band.
  double guard_band_s = 30.0;
};

struct Tally {
  std::size_t seizures = 0;
  std::size_t detected_seizures = 0;
  std::size_t events = 0;
  std::size_t false_positive_events = 0;
  std::size_t tp_windows = 0;
  std::size_t fn_windows = 0;
  std::size_t fp_windows = 0;
  std::size_t tn_windows = 0;
  double seconds = 0.0;

  Tally& operator+=(const Tally& o);
  bool operator==(const Tally&) const = default;

  double window_sensitivity() const;
  double window_specificity() const;
  double event_sensitivity() const;
  double hours() const { return seconds / 3600.0; }
  double false_positives_per_hour() const;
};

struct EvalReport {
  Tally total;
  std::map<std::string, Tally> per_patient;

  double window_sensitivity() const { return total.window_sensitivity(); }
  double event_sensitivity() const { return total.event_sensitivity(); }
  double false_positive_events_per_hour() const { return total.false_positives_per_hour(); }
  double hours_evaluated() const { return total.hours(); }

  EvalReport& operator+=(const EvalReport& o);
};

// Merges overlapping or touching intervals of the same recording. Output is
// sorted by (recording, start) and disjoint; merging twice changes nothing.
std::vector<DetectionEvent> merge_events(std::span<const DetectionEvent> events);

// Runs of consecutive positive windows, per recording.
std::vector<DetectionEvent> detection_events(std::span<const WindowPrediction> predictions);

// Hours come from the union of window coverage per recording. Only
// annotations that overlap that coverage are counted as seizures.
EvalReport score(std::span<const WindowPrediction> predictions,
                 std::span<const SeizureAnnotation> annotations,
                 const ScoreOptions& options = {});

// Predictions for every sequence of `recordings` (raw images).
std::vector<WindowPrediction> predict_recordings(const EnsembleModel& model,
                                                 std::span<const RecordingImages> recordings,
                                                 int jobs = 1);

struct WindowRef {
  std::size_t recording = 0;
  std::size_t sequence = 0;
  auto operator<=>(const WindowRef&) const = default;
};

struct Fold {
  std::string name;
  std::string test_patient;
  std::vector<WindowRef> train;
  std::vector<WindowRef> test;
  std::vector<SeizureAnnotation> test_annotations;
  bool holds_out_patient = false;
};

// One fold per seizure of `patient`. Windows of the patient are assigned to
// the nearest seizure on the concatenated timeline of its recordings, so each
// fold withholds one seizure and a contiguous stretch of background.
std::vector<Fold> leave_one_seizure_out_folds(std::span<const RecordingImages> corpus,
                                              const std::string& patient);
// One fold per patient; the withheld patient contributes nothing to training.
std::vector<Fold> leave_one_patient_out_folds(std::span<const RecordingImages> corpus);
// Patients in sorted order.
std::vector<std::string> patients_of(std::span<const RecordingImages> corpus);

// Raises DataLeak if a window is in both train and test, or (for patient
// folds) if the test patient appears in training.
void check_fold(const Fold& fold, std::span<const RecordingImages> corpus);

// Builds a model from raw training sequences for one fold.
using FoldTrainer =
    std::function<EnsembleModel(std::span<const ImageSequence> train, const Fold& fold)>;

struct FoldResult {
  std::string name;
  EvalReport report;
  std::vector<WindowPrediction> predictions;
};

struct ProtocolResult {
  EvalReport report;  // sum over folds
  std::vector<FoldResult> folds;
};

ProtocolResult run_folds(std::span<const RecordingImages> corpus, std::span<const Fold> folds,
                         const FoldTrainer& trainer, const ScoreOptions& options = {},
                         int jobs = 1);

ProtocolResult leave_one_seizure_out(std::span<const RecordingImages> corpus,
                                     const std::string& patient, const FoldTrainer& trainer,
                                     const ScoreOptions& options = {}, int jobs = 1);
ProtocolResult leave_one_patient_out(std::span<const RecordingImages> corpus,
                                     const FoldTrainer& trainer, const ScoreOptions& options = {},
                                     int jobs = 1);

// Raw recording plus its annotations, the input of the missing-channel path.
struct LabeledRecording {
  std::shared_ptr<const Recording> recording;
  std::vector<SeizureAnnotation> annotations;
};

struct AblationOptions {
  int max_k = 3;
  int repetitions = 3;
  std::uint64_t seed = 1;
  int jobs = 1;
  ScoreOptions score;
};

struct AblationPoint {
  int k = 0;
  std::vector<std::vector<std::string>> removed;  // per repetition
  std::vector<EvalReport> repetitions;
  double mean_event_sensitivity = 0.0;
  double std_event_sensitivity = 0.0;
  double mean_window_sensitivity = 0.0;
  double std_window_sensitivity = 0.0;
  double mean_fp_per_hour = 0.0;
  double std_fp_per_hour = 0.0;

  void summarize();
};

// Channels removed for (k, repetition); depends on the seed and channel list only.
std::vector<std::string> ablated_channels(std::span<const std::string> channels, int k, int repetition,
                                          std::uint64_t seed);

// For each k in 0..max_k: remove k channels at random (k = 0 runs once),
// rebuild images without them, normalize with the model's normalizer, score.
std::vector<AblationPoint> channel_ablation_curve(const EnsembleModel& model,
                                                  std::span<const LabeledRecording> data,
                                                  const ElectrodeLayout& layout,
                                                  const AblationOptions& options);

// Sums reports of matching (k, repetition) across curves, e.g. over folds.
std::vector<AblationPoint> combine_ablation(std::span<const std::vector<AblationPoint>> curves);

// Per-patient rows, then a TOTAL row. Columns in docs/report_format.md.
std::string report_csv(const EvalReport& report);
EvalReport parse_report_csv(std::string_view text);
// Flat `key: value` structured summary.
std::string report_summary(const EvalReport& report);
std::string ablation_csv(std::span<const AblationPoint> curve);
std::string predictions_csv(std::span<const WindowPrediction> predictions);

}  // namespace szd
