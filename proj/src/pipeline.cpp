#include "szd/pipeline.hpp"

#include <algorithm>

#include "szd/error.hpp"
#include "szd/io_util.hpp"
#include "szd/training.hpp"

namespace szd {

std::string patient_for(const std::string& recording_key, const std::string& header_patient) {
  const auto us = recording_key.rfind('_');
  if (us != std::string::npos && us > 0) return recording_key.substr(0, us);
  if (!header_patient.empty()) return header_patient;
  return recording_key;
}

std::vector<std::filesystem::path> list_edf(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorKind::kIo, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (e.is_regular_file() && ext == ".edf") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<SeizureAnnotation> load_annotations(const std::filesystem::path& dir) {
  const auto csv = dir / "annotations.csv";
  if (std::filesystem::exists(csv)) return parse_annotations(read_file(csv), AnnotationFormat::kCsv);
  std::vector<std::filesystem::path> summaries;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.size() >= 11 && name.ends_with("summary.txt")) summaries.push_back(e.path());
  }
  std::sort(summaries.begin(), summaries.end());
  std::vector<SeizureAnnotation> all;
  for (const auto& s : summaries) {
    auto a = parse_annotations(read_file(s), AnnotationFormat::kChbmitSummary);
    all.insert(all.end(), a.begin(), a.end());
  }
  return all;
}

LabeledRecording load_recording(const std::filesystem::path& edf,
                                const std::vector<SeizureAnnotation>& annotations,
                                const ElectrodeLayout& layout) {
  Recording raw = read_edf(edf);
  Recording rec = select_channels(raw, [&](const ChannelSignal& c) { return is_resolvable(layout, c.label); });
  rec.patient_id = patient_for(rec.id, raw.patient_id);
  LabeledRecording out;
  out.annotations = annotations_for(annotations, rec);
  out.recording = std::make_shared<const Recording>(std::move(rec));
  return out;
}

RecordingImages image_recording(const LabeledRecording& rec, const ElectrodeLayout& layout,
                                const ImagingOptions& options, double stride_s, int jobs) {
  RecordingImages out;
  out.recording_ref = rec.recording->id;
  out.patient_id = rec.recording->patient_id;
  out.duration_s = rec.recording->duration_s;
  out.stride_s = stride_s;
  for (const auto& c : rec.recording->channels) {
    if (!options.excluded_channels.count(c.label)) out.channels.push_back(c.label);
  }
  out.annotations = rec.annotations;
  const auto windows = segment(rec.recording, rec.annotations, stride_s);
  out.sequences.resize(windows.size());
  parallel_for(windows.size(), jobs, [&](std::size_t i) {
    out.sequences[i] = window_to_sequence(windows[i], layout, options);
  });
  return out;
}

std::vector<ImageSequence> gather_sequences(std::span<const RecordingImages> corpus) {
  std::vector<ImageSequence> out;
  for (const auto& r : corpus) out.insert(out.end(), r.sequences.begin(), r.sequences.end());
  return out;
}

}  // namespace szd
