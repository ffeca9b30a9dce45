// szd: command-line front end for the seizure detection pipeline.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "szd/error.hpp"
#include "szd/evaluation.hpp"
#include "szd/image_store.hpp"
#include "szd/io_util.hpp"
#include "szd/model.hpp"
#include "szd/occlusion.hpp"
#include "szd/pipeline.hpp"
#include "szd/random.hpp"
#include "szd/svg.hpp"
#include "szd/synth.hpp"
#include "szd/training.hpp"

namespace fs = std::filesystem;
using namespace szd;

namespace {

bool g_quiet = false;

void log_line(const std::string& m) {
  if (!g_quiet) std::cerr << m << '\n';
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

int report_error(const std::string& kind, int code, const std::string& message) {
  std::cerr << "szd error: kind=" << kind << " code=" << code << " message=" << one_line(message)
            << '\n';
  return code;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  return out;
}

// Options shared by the training subcommands.
struct TrainFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::optional<int> max_epochs;
  std::optional<int> ensemble;

  void add(CLI::App* app) {
    app->add_option("--config", config, "training config file (key = value)");
    app->add_option("--seed", seed, "random seed (overrides the config)");
    app->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    app->add_option("--max-epochs", max_epochs, "override max_epochs")->check(CLI::NonNegativeNumber);
  }

  TrainConfig resolve() const {
    TrainConfig c = config.empty() ? TrainConfig{} : parse_train_config(read_file(config));
    if (seed) c.seed = *seed;
    if (max_epochs) c.max_epochs = *max_epochs;
    if (ensemble) c.ensemble_size = *ensemble;
    c.jobs = jobs;
    c.validate();
    return c;
  }
};

std::vector<RecordingImages> select_patients(std::vector<RecordingImages> corpus,
                                             const std::vector<std::string>& patients) {
  if (patients.empty()) return corpus;
  const std::set<std::string> want(patients.begin(), patients.end());
  std::set<std::string> seen;
  std::vector<RecordingImages> out;
  for (auto& r : corpus) {
    if (want.count(r.patient_id)) {
      seen.insert(r.patient_id);
      out.push_back(std::move(r));
    }
  }
  for (const auto& p : want) {
    if (!seen.count(p)) fail(ErrorKind::kInvalidArgument, "no recordings for patient " + p);
  }
  return out;
}

// Patients to evaluate a trained model on: the requested ones (which must not
// overlap its training patients) or, by default, every untrained patient.
std::vector<std::string> held_out_patients(const std::vector<std::string>& available,
                                           const std::vector<std::string>& requested,
                                           const EnsembleModel& model) {
  const std::set<std::string> trained(model.trained_patients.begin(), model.trained_patients.end());
  std::vector<std::string> out;
  if (!requested.empty()) {
    for (const auto& p : requested) {
      if (trained.count(p)) fail(ErrorKind::kDataLeak, "model was trained on patient " + p);
      out.push_back(p);
    }
    return out;
  }
  for (const auto& p : available) {
    if (!trained.count(p)) out.push_back(p);
  }
  if (out.empty()) fail(ErrorKind::kEmptySplit, "every patient in the data was used to train the model");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file(path, text);
}

int cmd_synth(const std::string& config_path, const std::string& out, std::optional<std::uint64_t> seed) {
  SynthConfig c = config_path.empty() ? SynthConfig{} : parse_synth_config(read_file(config_path));
  if (seed) c.seed = *seed;
  c.validate();
  fs::create_directories(out);
  for (int i = 0; i < c.n_patients; ++i) {
    const auto patient = generate_patient(c, i);
    write_synth_patient(patient, out, i == 0);
    log_line("synth: " + patient.patient_id + " (" + std::to_string(patient.annotations.size()) +
             " seizures)");
  }
  write_file(fs::path(out) / "synth_config.txt", format_synth_config(c));
  return 0;
}

int cmd_images(const std::string& in, const std::string& out, double stride, int jobs,
               const std::string& exclude) {
  const auto& layout = ElectrodeLayout::standard_1020();
  const auto annotations = load_annotations(in);
  const auto edfs = list_edf(in);
  if (edfs.empty()) fail(ErrorKind::kIo, "no .edf files in " + in);
  ImagingOptions options;
  for (const auto& c : split_list(exclude)) options.excluded_channels.insert(c);

  std::array<double, kBandCount> sum{}, sumsq{};
  double count = 0.0;
  for (const auto& path : edfs) {
    const auto rec = load_recording(path, annotations, layout);
    const auto images = image_recording(rec, layout, options, stride, jobs);
    write_recording_images(images, out);
    for (const auto& s : images.sequences) {
      for (int f = 0; f < kSubWindows; ++f) {
        const auto frame = s.frame(f);
        for (int b = 0; b < kBandCount; ++b) {
          for (int k = 0; k < kPlaneSize; ++k) {
            const double v = frame[static_cast<std::size_t>(b * kPlaneSize + k)];
            sum[b] += v;
            sumsq[b] += v * v;
          }
        }
      }
      count += kSubWindows * kPlaneSize;
    }
    log_line("images: " + images.recording_ref + " " + std::to_string(images.sequences.size()) +
             " sequences");
  }
  Normalizer n;
  for (int b = 0; b < kBandCount; ++b) {
    n.mean[b] = count > 0 ? sum[b] / count : 0.0;
    const double var = count > 0 ? std::max(0.0, sumsq[b] / count - n.mean[b] * n.mean[b]) : 0.0;
    n.stddev[b] = std::sqrt(var);
  }
  write_normalizer(n, fs::path(out) / "normalizer.txt");
  return 0;
}

int cmd_init(const std::string& out, std::uint64_t seed, int members) {
  std::vector<ModelParams> params;
  for (int m = 0; m < members; ++m) params.push_back(initialize_model(derive_seed(seed, 4, static_cast<std::uint64_t>(m))));
  EnsembleModel model(std::move(params), Normalizer{}, {0.5, 0.5}, {0.5, 0.5});
  model.seed = seed;
  save_checkpoint(model.to_checkpoint(), out);
  return 0;
}

int cmd_pretrain(const std::string& data, const std::string& out, const TrainFlags& flags,
                 const std::vector<std::string>& patients) {
  TrainConfig c = flags.resolve();
  const auto corpus = select_patients(read_image_store(data), patients);
  const auto raw = gather_sequences(corpus);
  DetectorTrainingOptions o;
  o.log = log_line;
  c.ensemble_size = 1;
  c.max_epochs = 0;  // extractor only: the recurrent part keeps its initial weights
  auto model = train_detector(raw, c, o);
  model.epoch = 0;
  save_checkpoint(model.to_checkpoint(), out);
  return 0;
}

int cmd_train(const std::string& data, const std::string& init, const std::string& out,
              const TrainFlags& flags, const std::vector<std::string>& patients) {
  const TrainConfig c = flags.resolve();
  const auto corpus = select_patients(read_image_store(data), patients);
  const auto raw = gather_sequences(corpus);
  DetectorTrainingOptions o;
  o.log = log_line;
  if (!init.empty()) {
    const auto base = EnsembleModel::from_checkpoint(load_checkpoint(init));
    o.init = base.members();
    // A pretrained extractor is used as is; a trained model is a warm start.
    o.pretrain = false;
  }
  auto model = train_detector(raw, c, o);
  if (!init.empty()) {
    const auto base = load_checkpoint(init);
    std::set<std::string> all(model.trained_patients.begin(), model.trained_patients.end());
    all.insert(base.trained_patients.begin(), base.trained_patients.end());
    model.trained_patients.assign(all.begin(), all.end());
  }
  save_checkpoint(model.to_checkpoint(), out);
  return 0;
}

int cmd_finetune(const std::string& base_path, const std::string& patient, const std::string& data,
                 const std::string& out, const TrainFlags& flags) {
  const TrainConfig c = flags.resolve();
  const auto base = EnsembleModel::from_checkpoint(load_checkpoint(base_path));
  const auto corpus = select_patients(read_image_store(data), {patient});
  const auto raw = gather_sequences(corpus);
  DetectorTrainingOptions o;
  o.log = log_line;
  const auto model = finetune_detector(base, raw, c, o);
  save_checkpoint(model.to_checkpoint(), out);
  return 0;
}

struct EvalFlags {
  std::string mode;
  std::string data;
  std::string model;
  std::string report;
  std::string summary;
  std::string predictions;
  std::vector<std::string> patients;
  bool no_guard = false;
};

int cmd_eval(const EvalFlags& e, const TrainFlags& flags) {
  const TrainConfig c = flags.resolve();
  const auto base = EnsembleModel::from_checkpoint(load_checkpoint(e.model));
  auto corpus = read_image_store(e.data);
  if (corpus.empty()) fail(ErrorKind::kEmptySplit, "no image sequences in " + e.data);
  ScoreOptions score_options;
  if (e.no_guard) score_options.guard_band_s = 0.0;

  EvalReport report;
  std::vector<WindowPrediction> predictions;
  if (e.mode == "holdout") {
    const auto patients = held_out_patients(patients_of(corpus), e.patients, base);
    const auto test = select_patients(std::move(corpus), patients);
    predictions = predict_recordings(base, test, c.jobs);
    std::vector<SeizureAnnotation> annotations;
    for (const auto& r : test) annotations.insert(annotations.end(), r.annotations.begin(), r.annotations.end());
    report = score(predictions, annotations, score_options);
  } else {
    // The model is the starting point of every fold: untrained checkpoints
    // get per-fold pretraining, trained ones are warm starts.
    const bool cold = base.trained_patients.empty();
    FoldTrainer trainer = [&](std::span<const ImageSequence> train, const Fold& fold) {
      if (std::find(base.trained_patients.begin(), base.trained_patients.end(), fold.test_patient) !=
          base.trained_patients.end()) {
        fail(ErrorKind::kDataLeak, "initial model was trained on withheld patient " + fold.test_patient);
      }
      log_line("fold " + fold.name + ": " + std::to_string(train.size()) + " training sequences");
      DetectorTrainingOptions o;
      o.log = log_line;
      o.init = base.members();
      o.pretrain = cold;
      auto m = train_detector(train, c, o);
      std::set<std::string> all(m.trained_patients.begin(), m.trained_patients.end());
      all.insert(base.trained_patients.begin(), base.trained_patients.end());
      m.trained_patients.assign(all.begin(), all.end());
      return m;
    };
    ProtocolResult result;
    if (e.mode == "lopo") {
      if (!e.patients.empty()) corpus = select_patients(std::move(corpus), e.patients);
      result = leave_one_patient_out(corpus, trainer, score_options, c.jobs);
    } else {
      auto patients = e.patients.empty() ? patients_of(corpus) : e.patients;
      for (const auto& p : patients) {
        std::size_t seizures = 0;
        for (const auto& r : corpus) {
          if (r.patient_id == p) seizures += r.annotations.size();
        }
        if (seizures < 2) {
          log_line("loso: skipping " + p + " (" + std::to_string(seizures) + " seizures)");
          continue;
        }
        auto r = leave_one_seizure_out(corpus, p, trainer, score_options, c.jobs);
        report += r.report;
        for (auto& f : r.folds) result.folds.push_back(std::move(f));
      }
      result.report = report;
    }
    report = result.report;
    for (const auto& f : result.folds) {
      predictions.insert(predictions.end(), f.predictions.begin(), f.predictions.end());
    }
    if (report.per_patient.empty()) fail(ErrorKind::kEmptySplit, "no fold could be evaluated");
  }
  write_text(e.report, report_csv(report));
  if (!e.predictions.empty()) write_text(e.predictions, predictions_csv(predictions));
  if (!e.summary.empty()) {
    write_text(e.summary, report_summary(report));
  } else {
    std::cout << report_summary(report);
  }
  return 0;
}

int cmd_ablate(const std::string& model_path, const std::string& data, int max_k, int reps,
               std::uint64_t seed, int jobs, const std::string& out,
               const std::vector<std::string>& patients_requested) {
  const auto& layout = ElectrodeLayout::standard_1020();
  const auto model = EnsembleModel::from_checkpoint(load_checkpoint(model_path));
  const auto annotations = load_annotations(data);
  std::vector<LabeledRecording> all;
  std::vector<std::string> patients;
  for (const auto& path : list_edf(data)) {
    all.push_back(load_recording(path, annotations, layout));
    patients.push_back(all.back().recording->patient_id);
  }
  std::sort(patients.begin(), patients.end());
  patients.erase(std::unique(patients.begin(), patients.end()), patients.end());
  const auto chosen = held_out_patients(patients, patients_requested, model);
  const std::set<std::string> keep(chosen.begin(), chosen.end());
  std::vector<LabeledRecording> data_set;
  for (auto& r : all) {
    if (keep.count(r.recording->patient_id)) data_set.push_back(std::move(r));
  }
  AblationOptions o;
  o.max_k = max_k;
  o.repetitions = reps;
  o.seed = seed;
  o.jobs = jobs;
  const auto curve = channel_ablation_curve(model, data_set, layout, o);
  const auto csv = ablation_csv(curve);
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_text(out, csv);
  }
  return 0;
}

int cmd_occlude(const std::string& model_path, const std::string& data, const std::string& id,
                const std::string& out, std::string csv_out, const OcclusionOptions& options) {
  const auto at = id.rfind('@');
  if (at == std::string::npos) {
    fail(ErrorKind::kInvalidArgument, "sequence id must look like <recording>@<start seconds>");
  }
  const std::string ref = id.substr(0, at);
  double start = 0.0;
  try {
    start = std::stod(id.substr(at + 1));
  } catch (const std::exception&) {
    fail(ErrorKind::kInvalidArgument, "bad start time in sequence id '" + id + "'");
  }
  const auto model = EnsembleModel::from_checkpoint(load_checkpoint(model_path));
  const auto rec = read_recording_images(data, ref);
  const ImageSequence* seq = nullptr;
  for (const auto& s : rec.sequences) {
    if (std::abs(s.start_s - start) < 1e-6) seq = &s;
  }
  if (!seq) fail(ErrorKind::kInvalidArgument, "no sequence starting at " + id.substr(at + 1) + " s in " + ref);
  const auto normalized = model.normalizer().applied(*seq);
  const auto map = occlusion_map(model, normalized, options);
  if (map.not_positive_baseline) {
    log_line("occlude: warning: baseline p(seizure) " + std::to_string(map.baseline_prob) +
             " is not a seizure prediction");
  }
  const auto& layout = ElectrodeLayout::standard_1020();
  write_text(out, occlusion_svg(map, layout, id));
  if (csv_out.empty()) csv_out = fs::path(out).replace_extension(".csv").string();
  write_text(csv_out, occlusion_csv(map));
  const auto ranking = map_to_scalp(map, layout);
  std::cout << "electrode,score\n";
  char buf[32];
  for (const auto& r : ranking) {
    std::snprintf(buf, sizeof buf, "%.6f", r.score);
    std::cout << r.electrode << ',' << buf << '\n';
  }
  return 0;
}

int cmd_plot(const std::string& report_path, const std::string& out) {
  const auto report = parse_report_csv(read_file(report_path));
  svg::BarSeries sens{"Event sensitivity per patient", "sensitivity", {}, {}, 1.0};
  svg::BarSeries fpr{"False positive events per hour", "FP / h", {}, {}, 0.0};
  svg::BarSeries wsens{"Window sensitivity per patient", "sensitivity", {}, {}, 1.0};
  for (const auto& [p, t] : report.per_patient) {
    sens.labels.push_back(p);
    sens.values.push_back(t.event_sensitivity());
    fpr.labels.push_back(p);
    fpr.values.push_back(t.false_positives_per_hour());
    wsens.labels.push_back(p);
    wsens.values.push_back(t.window_sensitivity());
  }
  fs::create_directories(out);
  write_file(fs::path(out) / "sensitivity.svg", svg::bar_chart(sens));
  write_file(fs::path(out) / "fp_per_hour.svg", svg::bar_chart(fpr));
  write_file(fs::path(out) / "window_sensitivity.svg", svg::bar_chart(wsens));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"szd: EEG seizure detection with recurrent convolutional networks"};
  app.require_subcommand(1);
  app.add_flag("-q,--quiet", g_quiet, "suppress progress output");

  std::string synth_config, synth_out;
  std::optional<std::uint64_t> synth_seed;
  auto* synth = app.add_subcommand("synth", "generate a synthetic EEG corpus (EDF + CSV)");
  synth->add_option("--config", synth_config, "synthetic corpus config file");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "random seed (overrides the config)");

  std::string img_in, img_out, img_exclude;
  double img_stride = kWindowSeconds;
  int img_jobs = 1;
  auto* images = app.add_subcommand("images", "build image sequences from EDF recordings");
  images->add_option("--in", img_in, "directory of .edf files and annotations")->required();
  images->add_option("--out", img_out, "image store directory")->required();
  images->add_option("--stride", img_stride, "window stride in seconds")->check(CLI::PositiveNumber);
  images->add_option("--exclude", img_exclude, "comma-separated channels to leave out");
  images->add_option("--jobs", img_jobs, "worker threads")->check(CLI::PositiveNumber);

  std::string init_out;
  std::uint64_t init_seed = 1;
  int init_members = 3;
  auto* init = app.add_subcommand("init", "write an untrained model checkpoint");
  init->add_option("--out", init_out, "checkpoint path")->required();
  init->add_option("--seed", init_seed, "random seed");
  init->add_option("--ensemble", init_members, "ensemble members")->check(CLI::PositiveNumber);

  std::string pre_data, pre_out, pre_patients;
  TrainFlags pre_flags;
  auto* pretrain = app.add_subcommand("pretrain", "train the convolutional layers on 1 s images");
  pretrain->add_option("--data", pre_data, "image store directory")->required();
  pretrain->add_option("--out", pre_out, "checkpoint path")->required();
  pretrain->add_option("--patients", pre_patients, "comma-separated patients (default: all)");
  pre_flags.add(pretrain);

  std::string tr_data, tr_init, tr_out, tr_patients;
  TrainFlags tr_flags;
  auto* train = app.add_subcommand("train", "train the full model or an ensemble");
  train->add_option("--data", tr_data, "image store directory")->required();
  train->add_option("--init", tr_init, "initial checkpoint (pretrained or trained)");
  train->add_option("--out", tr_out, "checkpoint path")->required();
  train->add_option("--ensemble", tr_flags.ensemble, "ensemble members")->check(CLI::PositiveNumber);
  train->add_option("--patients", tr_patients, "comma-separated patients (default: all)");
  tr_flags.add(train);

  std::string ft_base, ft_patient, ft_data, ft_out;
  TrainFlags ft_flags;
  auto* finetune = app.add_subcommand("finetune", "adapt a trained model to one patient");
  finetune->add_option("--base", ft_base, "trained checkpoint")->required();
  finetune->add_option("--patient", ft_patient, "patient id")->required();
  finetune->add_option("--data", ft_data, "image store directory")->required();
  finetune->add_option("--out", ft_out, "checkpoint path")->required();
  ft_flags.add(finetune);

  EvalFlags ev;
  std::string ev_patients;
  TrainFlags ev_flags;
  auto* eval = app.add_subcommand("eval", "run an evaluation protocol");
  eval->add_option("--mode", ev.mode, "loso, lopo or holdout")
      ->required()
      ->check(CLI::IsMember({"loso", "lopo", "holdout"}));
  eval->add_option("--data", ev.data, "image store directory")->required();
  eval->add_option("--model", ev.model, "checkpoint (trained model, or fold initialization)")->required();
  eval->add_option("--report", ev.report, "report CSV path")->required();
  eval->add_option("--summary", ev.summary, "summary path (default: stdout)");
  eval->add_option("--predictions", ev.predictions, "per-window predictions CSV");
  eval->add_option("--patients", ev_patients, "comma-separated patients");
  eval->add_flag("--no-guard", ev.no_guard, "disable the 30 s guard band around seizures");
  ev_flags.add(eval);

  std::string ab_model, ab_data, ab_out, ab_patients;
  int ab_k = 3, ab_reps = 3, ab_jobs = 1;
  std::uint64_t ab_seed = 1;
  auto* ablate = app.add_subcommand("ablate-channels", "sensitivity and FP rate versus missing channels");
  ablate->add_option("--model", ab_model, "trained checkpoint")->required();
  ablate->add_option("--data", ab_data, "directory of .edf files and annotations")->required();
  ablate->add_option("--max-k", ab_k, "largest number of channels removed")->required()->check(CLI::NonNegativeNumber);
  ablate->add_option("--repetitions", ab_reps, "random channel subsets per k")->check(CLI::PositiveNumber);
  ablate->add_option("--seed", ab_seed, "random seed");
  ablate->add_option("--jobs", ab_jobs, "worker threads")->check(CLI::PositiveNumber);
  ablate->add_option("--out", ab_out, "curve CSV path (default: stdout)");
  ablate->add_option("--patients", ab_patients, "comma-separated patients");

  std::string oc_model, oc_data, oc_id, oc_out, oc_csv;
  OcclusionOptions oc_opts;
  auto* occlude = app.add_subcommand("occlude", "occlusion map of one sequence");
  occlude->add_option("--model", oc_model, "trained checkpoint")->required();
  occlude->add_option("--data", oc_data, "image store directory")->required();
  occlude->add_option("--sequence", oc_id, "<recording>@<start seconds>")->required();
  occlude->add_option("--out", oc_out, "SVG path")->required();
  occlude->add_option("--csv", oc_csv, "CSV path (default: next to the SVG)");
  occlude->add_option("--size", oc_opts.size, "occluder size in pixels")->check(CLI::Range(1, kGridSize));
  occlude->add_option("--stride", oc_opts.stride, "occluder stride in pixels")->check(CLI::PositiveNumber);
  occlude->add_option("--fill", oc_opts.fill, "fill value in normalized units");
  occlude->add_option("--jobs", oc_opts.jobs, "worker threads")->check(CLI::PositiveNumber);

  std::string pl_report, pl_out;
  auto* plot = app.add_subcommand("plot", "bar charts from a report CSV");
  plot->add_option("--report", pl_report, "report CSV")->required();
  plot->add_option("--out", pl_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("Usage", 2, e.what());
  }

  try {
    if (*synth) return cmd_synth(synth_config, synth_out, synth_seed);
    if (*images) return cmd_images(img_in, img_out, img_stride, img_jobs, img_exclude);
    if (*init) return cmd_init(init_out, init_seed, init_members);
    if (*pretrain) return cmd_pretrain(pre_data, pre_out, pre_flags, split_list(pre_patients));
    if (*train) return cmd_train(tr_data, tr_init, tr_out, tr_flags, split_list(tr_patients));
    if (*finetune) return cmd_finetune(ft_base, ft_patient, ft_data, ft_out, ft_flags);
    if (*eval) {
      ev.patients = split_list(ev_patients);
      return cmd_eval(ev, ev_flags);
    }
    if (*ablate) return cmd_ablate(ab_model, ab_data, ab_k, ab_reps, ab_seed, ab_jobs, ab_out, split_list(ab_patients));
    if (*occlude) return cmd_occlude(oc_model, oc_data, oc_id, oc_out, oc_csv, oc_opts);
    if (*plot) return cmd_plot(pl_report, pl_out);
  } catch (const szd::Error& e) {
    return report_error(to_string(e.kind()), exit_code(e.kind()), e.what());
  } catch (const fs::filesystem_error& e) {
    return report_error("Io", 6, e.what());
  } catch (const std::exception& e) {
    return report_error("Internal", 1, e.what());
  }
  return 0;
}
