#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace szd {

struct ChannelSignal {
  std::string label;
  std::vector<double> samples;  // physical units (microvolts)
  double physical_min = -1.0;
  double physical_max = 1.0;
  int digital_min = -32768;
  int digital_max = 32767;
};

// A parsed EDF file. Immutable after construction by convention; pipelines
// share it through std::shared_ptr<const Recording>.
struct Recording {
  std::string id;  // recording reference, e.g. "chb01_03"
  std::string patient_id;
  std::vector<ChannelSignal> channels;
  double sample_rate_hz = 256.0;
  double duration_s = 0.0;
  std::optional<std::string> start_time;  // "dd.mm.yy hh.mm.ss" as in the header

  std::size_t samples_per_channel() const;
  const ChannelSignal* find(std::string_view label) const;
};

struct SeizureAnnotation {
  std::string recording;
  double onset_s = 0.0;
  double offset_s = 0.0;

  double duration_s() const { return offset_s - onset_s; }
};

// Calibration from a digital sample to physical units.
double calibrate(int digital, const ChannelSignal& channel);

// Parses a plain EDF (not EDF+) byte stream. Duplicate channel labels are
// disambiguated with a "-<n>" suffix the way common EDF tooling does.
Recording parse_edf(std::span<const std::byte> bytes,
                    std::string recording_id = {});
Recording parse_edf(std::string_view bytes, std::string recording_id = {});
Recording read_edf(const std::filesystem::path& path);

// Minimal conformant writer: 1 s data records, space-padded ASCII header,
// digital range [-32768, 32767]. Physical limits are taken from each channel
// and widened so they survive the 8-character header field.
std::string write_edf(const Recording& rec);
void write_edf_file(const Recording& rec, const std::filesystem::path& path);

// Keeps only channels accepted by `keep`, preserving order.
Recording select_channels(const Recording& rec,
                          const std::function<bool(const ChannelSignal&)>& keep);

enum class AnnotationFormat { kCsv, kChbmitSummary };

// csv: `recording,onset_s,offset_s` per line; blank lines, '#' comments and a
// leading header row starting with "recording" are skipped.
// chbmit_summary: "File Name:" blocks with "Seizure [n] Start/End Time: N seconds".
std::vector<SeizureAnnotation> parse_annotations(std::string_view text,
                                                 AnnotationFormat format);
std::string write_annotations_csv(std::span<const SeizureAnnotation> annotations);

// Strips directories and a trailing ".edf" so "data/chb01_03.edf" and
// "chb01_03" refer to the same recording.
std::string recording_key(std::string_view name);

// Annotations of `recording` only, checked against its duration.
std::vector<SeizureAnnotation> annotations_for(
    std::span<const SeizureAnnotation> all, const Recording& recording);

}  // namespace szd
