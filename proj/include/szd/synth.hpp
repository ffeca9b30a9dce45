#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "szd/edf_io.hpp"
#include "szd/spectral_montage.hpp"

namespace szd {

struct SynthConfig {
  int n_patients = 6;
  double hours_per_patient = 2.0;
  double recording_hours = 1.0;  // each patient's time is split into recordings of this length
  int seizures_per_patient = 4;
  int seizure_duration_min_s = 30;
  int seizure_duration_max_s = 60;
  // Cycled over patients; "T7+C3" makes a two-electrode focus.
  std::vector<std::string> focus_electrodes{"T7", "F4", "P3"};
  double background_noise_std = 20.0;  // microvolts
  double background_ar = 0.5;          // AR(1) coefficient of the background
  double seizure_frequency_hz = 3.0;
  double seizure_amplitude_gain = 4.0;  // oscillation amplitude in background std units
  double focus_width = 0.5;             // spatial decay length in projected radians
  double ramp_s = 3.0;
  double edge_margin_s = 60.0;
  double min_gap_s = 120.0;
  double sample_rate_hz = 256.0;
  std::uint64_t seed = 7;

  void validate() const;
};

SynthConfig parse_synth_config(std::string_view text);
std::string format_synth_config(const SynthConfig& config);

// The 18-channel bipolar double-banana montage.
const std::vector<std::string>& synth_montage();

struct SynthPatient {
  std::string patient_id;
  std::vector<std::string> focus;
  std::vector<Recording> recordings;
  std::vector<SeizureAnnotation> annotations;
};

std::string synth_patient_id(int index);
std::vector<std::string> synth_focus(const SynthConfig& config, int index);

// Patient `index` (0-based); independent of every other patient.
SynthPatient generate_patient(const SynthConfig& config, int index,
                              const ElectrodeLayout& layout = ElectrodeLayout::standard_1020());
std::vector<SynthPatient> generate(const SynthConfig& config,
                                   const ElectrodeLayout& layout = ElectrodeLayout::standard_1020());

// One EDF byte stream per recording.
std::vector<std::string> export_edf(const std::vector<Recording>& recordings);

// Writes `<ref>.edf` per recording; appends to `annotations.csv` and
// `focus.csv` in `dir` (headers written when `first` is set).
void write_synth_patient(const SynthPatient& patient, const std::filesystem::path& dir, bool first);

}  // namespace szd
