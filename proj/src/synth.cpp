#include "szd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "szd/error.hpp"
#include "szd/io_util.hpp"
#include "szd/random.hpp"

namespace szd {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  fail(ErrorKind::kInvalidArgument, "synth config: bad value for " + key + ": '" + v + "'");
}

int to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != std::floor(d) || std::abs(d) > 1e9) {
    fail(ErrorKind::kInvalidArgument, "synth config: " + key + " must be an integer");
  }
  return static_cast<int>(d);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  auto bad = [](const std::string& m) { fail(ErrorKind::kInvalidArgument, "synth config: " + m); };
  if (n_patients < 1) bad("n_patients must be >= 1");
  if (!(hours_per_patient > 0.0)) bad("hours_per_patient must be positive");
  if (!(recording_hours > 0.0)) bad("recording_hours must be positive");
  if (seizures_per_patient < 0) bad("seizures_per_patient must be >= 0");
  if (seizure_duration_min_s < 1 || seizure_duration_max_s < seizure_duration_min_s) {
    bad("seizure duration range must satisfy 1 <= min <= max");
  }
  if (focus_electrodes.empty()) bad("focus_electrodes must not be empty");
  if (!(background_noise_std > 0.0)) bad("background_noise_std must be positive");
  if (!(background_ar >= 0.0 && background_ar < 1.0)) bad("background_ar must lie in [0, 1)");
  if (!(seizure_frequency_hz > 0.0)) bad("seizure_frequency_hz must be positive");
  if (!(seizure_amplitude_gain >= 0.0)) bad("seizure_amplitude_gain must be >= 0");
  if (!(focus_width > 0.0)) bad("focus_width must be positive");
  if (!(ramp_s >= 0.0)) bad("ramp_s must be >= 0");
  if (!(edge_margin_s >= 0.0) || !(min_gap_s >= 0.0)) bad("margins must be >= 0");
  if (!(sample_rate_hz >= 98.0) || sample_rate_hz != std::floor(sample_rate_hz)) {
    bad("sample_rate_hz must be an integer >= 98");
  }
  const double total_s = hours_per_patient * 3600.0;
  const double rec_s = recording_hours * 3600.0;
  if (total_s != std::floor(total_s) || rec_s != std::floor(rec_s)) {
    bad("durations must be whole seconds");
  }
}

SynthConfig parse_synth_config(std::string_view text) {
  SynthConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::kUnparseableLine, "synth config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string v = trim(std::string_view(body).substr(eq + 1));
    if (key == "n_patients") c.n_patients = to_int(key, v);
    else if (key == "hours_per_patient") c.hours_per_patient = to_double(key, v);
    else if (key == "recording_hours") c.recording_hours = to_double(key, v);
    else if (key == "seizures_per_patient") c.seizures_per_patient = to_int(key, v);
    else if (key == "seizure_duration_s") {
      const auto comma = v.find(',');
      if (comma == std::string::npos) fail(ErrorKind::kInvalidArgument, "synth config: seizure_duration_s needs min, max");
      c.seizure_duration_min_s = to_int(key, trim(std::string_view(v).substr(0, comma)));
      c.seizure_duration_max_s = to_int(key, trim(std::string_view(v).substr(comma + 1)));
    } else if (key == "focus_electrodes") {
      c.focus_electrodes.clear();
      std::istringstream items(v);
      std::string item;
      while (std::getline(items, item, ',')) {
        item = trim(item);
        if (!item.empty()) c.focus_electrodes.push_back(item);
      }
    } else if (key == "background_noise_std") c.background_noise_std = to_double(key, v);
    else if (key == "background_ar") c.background_ar = to_double(key, v);
    else if (key == "seizure_frequency_hz") c.seizure_frequency_hz = to_double(key, v);
    else if (key == "seizure_amplitude_gain") c.seizure_amplitude_gain = to_double(key, v);
    else if (key == "focus_width") c.focus_width = to_double(key, v);
    else if (key == "ramp_s") c.ramp_s = to_double(key, v);
    else if (key == "edge_margin_s") c.edge_margin_s = to_double(key, v);
    else if (key == "min_gap_s") c.min_gap_s = to_double(key, v);
    else if (key == "sample_rate_hz") c.sample_rate_hz = to_double(key, v);
    else if (key == "seed") {
      try {
        c.seed = std::stoull(v);
      } catch (const std::exception&) {
        fail(ErrorKind::kInvalidArgument, "synth config: bad seed '" + v + "'");
      }
    } else {
      fail(ErrorKind::kInvalidArgument, "synth config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

std::string format_synth_config(const SynthConfig& c) {
  std::ostringstream os;
  os << "n_patients = " << c.n_patients << "\n"
     << "hours_per_patient = " << fmt(c.hours_per_patient) << "\n"
     << "recording_hours = " << fmt(c.recording_hours) << "\n"
     << "seizures_per_patient = " << c.seizures_per_patient << "\n"
     << "seizure_duration_s = " << c.seizure_duration_min_s << ", " << c.seizure_duration_max_s << "\n"
     << "focus_electrodes = ";
  for (std::size_t i = 0; i < c.focus_electrodes.size(); ++i) os << (i ? ", " : "") << c.focus_electrodes[i];
  os << "\n"
     << "background_noise_std = " << fmt(c.background_noise_std) << "\n"
     << "background_ar = " << fmt(c.background_ar) << "\n"
     << "seizure_frequency_hz = " << fmt(c.seizure_frequency_hz) << "\n"
     << "seizure_amplitude_gain = " << fmt(c.seizure_amplitude_gain) << "\n"
     << "focus_width = " << fmt(c.focus_width) << "\n"
     << "ramp_s = " << fmt(c.ramp_s) << "\n"
     << "edge_margin_s = " << fmt(c.edge_margin_s) << "\n"
     << "min_gap_s = " << fmt(c.min_gap_s) << "\n"
     << "sample_rate_hz = " << fmt(c.sample_rate_hz) << "\n"
     << "seed = " << c.seed << "\n";
  return os.str();
}

const std::vector<std::string>& synth_montage() {
  static const std::vector<std::string> montage{
      "FP1-F7", "F7-T7", "T7-P7", "P7-O1", "FP1-F3", "F3-C3", "C3-P3", "P3-O1", "FP2-F4",
      "F4-C4",  "C4-P4", "P4-O2", "FP2-F8", "F8-T8", "T8-P8", "P8-O2", "FZ-CZ", "CZ-PZ"};
  return montage;
}

std::string synth_patient_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "syn%02d", index + 1);
  return buf;
}

std::vector<std::string> synth_focus(const SynthConfig& config, int index) {
  const auto& entry = config.focus_electrodes[static_cast<std::size_t>(index) % config.focus_electrodes.size()];
  std::vector<std::string> out;
  std::istringstream in(entry);
  std::string name;
  while (std::getline(in, name, '+')) out.push_back(normalize_electrode_name(trim(name)));
  return out;
}

namespace {

struct PlannedSeizure {
  int recording;
  double onset;
  double duration;
};

std::vector<PlannedSeizure> plan_seizures(const SynthConfig& c, int n_recordings,
                                          const std::vector<double>& rec_durations, Rng& rng) {
  std::vector<std::vector<double>> durations(static_cast<std::size_t>(n_recordings));
  for (int s = 0; s < c.seizures_per_patient; ++s) {
    const auto span = static_cast<std::uint64_t>(c.seizure_duration_max_s - c.seizure_duration_min_s + 1);
    const double d = c.seizure_duration_min_s + static_cast<double>(rng.below(span));
    durations[static_cast<std::size_t>(s % n_recordings)].push_back(d);
  }
  std::vector<PlannedSeizure> out;
  for (int r = 0; r < n_recordings; ++r) {
    const auto& ds = durations[static_cast<std::size_t>(r)];
    if (ds.empty()) continue;
    double need = 2 * c.edge_margin_s + c.min_gap_s * static_cast<double>(ds.size() - 1);
    for (double d : ds) need += d;
    const double slack = rec_durations[static_cast<std::size_t>(r)] - need;
    if (slack < 0.0) {
      fail(ErrorKind::kInfeasibleSchedule,
           std::to_string(ds.size()) + " seizures do not fit in a " +
               fmt(rec_durations[static_cast<std::size_t>(r)]) + " s recording");
    }
    // Whole-second offsets: sorted uniform draws in [0, slack] spread the
    // free time between seizures.
    std::vector<double> u;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      u.push_back(std::floor(rng.uniform() * (std::floor(slack) + 1.0)));
    }
    std::sort(u.begin(), u.end());
    double t = c.edge_margin_s;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      out.push_back({r, t + u[i], ds[i]});
      t += ds[i] + c.min_gap_s;
    }
  }
  return out;
}

}  // namespace

SynthPatient generate_patient(const SynthConfig& config, int index, const ElectrodeLayout& layout) {
  config.validate();
  SynthPatient p;
  p.patient_id = synth_patient_id(index);
  p.focus = synth_focus(config, index);
  std::vector<Point2> focus_points;
  for (const auto& f : p.focus) {
    if (!layout.find(f)) fail(ErrorKind::kUnknownElectrode, "focus electrode '" + f + "' is not in the layout");
    focus_points.push_back(layout.projected(f));
  }

  const auto& montage = synth_montage();
  // Spatial weight per channel: Gaussian in the smallest projected distance
  // between the channel's electrodes and the focus.
  std::vector<double> weight;
  for (const auto& label : montage) {
    double dmin = std::numeric_limits<double>::infinity();
    for (const auto& e : channel_electrodes(label)) {
      for (const auto& f : focus_points) dmin = std::min(dmin, distance(layout.projected(e), f));
    }
    weight.push_back(std::exp(-(dmin / config.focus_width) * (dmin / config.focus_width)));
  }

  const double total_s = config.hours_per_patient * 3600.0;
  const double rec_s = config.recording_hours * 3600.0;
  std::vector<double> durations;
  for (double t = 0.0; t < total_s - 1e-9; t += rec_s) durations.push_back(std::min(rec_s, total_s - t));
  const int n_rec = static_cast<int>(durations.size());

  const auto patient_seed = derive_seed(config.seed, static_cast<std::uint64_t>(index));
  Rng schedule_rng(derive_seed(patient_seed, 1));
  const auto seizures = plan_seizures(config, n_rec, durations, schedule_rng);

  const double fs = config.sample_rate_hz;
  const double a = config.background_ar;
  const double innovation = config.background_noise_std * std::sqrt(1.0 - a * a);
  const double amp = config.seizure_amplitude_gain * config.background_noise_std;
  for (int r = 0; r < n_rec; ++r) {
    Recording rec;
    char id[32];
    std::snprintf(id, sizeof id, "%s_%02d", p.patient_id.c_str(), r + 1);
    rec.id = id;
    rec.patient_id = p.patient_id;
    rec.sample_rate_hz = fs;
    rec.duration_s = durations[static_cast<std::size_t>(r)];
    const auto n = static_cast<std::size_t>(std::llround(rec.duration_s * fs));
    Rng noise(derive_seed(patient_seed, 2, static_cast<std::uint64_t>(r)));
    for (std::size_t ch = 0; ch < montage.size(); ++ch) {
      ChannelSignal sig;
      sig.label = montage[ch];
      sig.samples.resize(n);
      double x = config.background_noise_std * noise.normal();
      for (std::size_t i = 0; i < n; ++i) {
        sig.samples[i] = x;
        x = a * x + innovation * noise.normal();
      }
      rec.channels.push_back(std::move(sig));
    }
    Rng phase_rng(derive_seed(patient_seed, 3, static_cast<std::uint64_t>(r)));
    for (const auto& s : seizures) {
      if (s.recording != r) continue;
      p.annotations.push_back({rec.id, s.onset, s.onset + s.duration});
      const double phase = phase_rng.uniform(0.0, 2.0 * std::numbers::pi);
      const auto i0 = static_cast<std::size_t>(std::llround(s.onset * fs));
      const auto i1 = static_cast<std::size_t>(std::llround((s.onset + s.duration) * fs));
      for (std::size_t i = i0; i < i1 && i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        const double into = t - s.onset, left = s.onset + s.duration - t;
        double env = 1.0;
        if (config.ramp_s > 0.0) {
          const double ramp = std::min({1.0, into / config.ramp_s, left / config.ramp_s});
          env = 0.5 - 0.5 * std::cos(std::numbers::pi * std::max(0.0, ramp));
        }
        const double wave = amp * env * std::sin(2.0 * std::numbers::pi * config.seizure_frequency_hz * into + phase);
        for (std::size_t ch = 0; ch < montage.size(); ++ch) {
          rec.channels[ch].samples[i] += weight[ch] * wave;
        }
      }
    }
    for (auto& ch : rec.channels) {
      const auto [lo, hi] = std::minmax_element(ch.samples.begin(), ch.samples.end());
      ch.physical_min = *lo;
      ch.physical_max = *hi;
    }
    p.recordings.push_back(std::move(rec));
  }
  return p;
}

std::vector<SynthPatient> generate(const SynthConfig& config, const ElectrodeLayout& layout) {
  std::vector<SynthPatient> out;
  for (int i = 0; i < config.n_patients; ++i) out.push_back(generate_patient(config, i, layout));
  return out;
}

std::vector<std::string> export_edf(const std::vector<Recording>& recordings) {
  std::vector<std::string> out;
  for (const auto& r : recordings) out.push_back(write_edf(r));
  return out;
}

void write_synth_patient(const SynthPatient& patient, const std::filesystem::path& dir, bool first) {
  std::filesystem::create_directories(dir);
  for (const auto& r : patient.recordings) write_edf_file(r, dir / (r.id + ".edf"));
  const auto mode = first ? std::ios::out | std::ios::trunc : std::ios::out | std::ios::app;
  {
    std::ofstream ann(dir / "annotations.csv", mode | std::ios::binary);
    if (!ann) fail(ErrorKind::kIo, "cannot write " + (dir / "annotations.csv").string());
    const std::string csv = write_annotations_csv(patient.annotations);
    ann << (first ? csv : csv.substr(csv.find('\n') + 1));
  }
  std::ofstream focus(dir / "focus.csv", mode | std::ios::binary);
  if (!focus) fail(ErrorKind::kIo, "cannot write " + (dir / "focus.csv").string());
  if (first) focus << "patient,focus\n";
  focus << patient.patient_id << ',';
  for (std::size_t i = 0; i < patient.focus.size(); ++i) focus << (i ? "+" : "") << patient.focus[i];
  focus << '\n';
}

}  // namespace szd
