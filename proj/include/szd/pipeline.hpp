#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "szd/evaluation.hpp"
#include "szd/image_store.hpp"
#include "szd/imaging.hpp"

namespace szd {

// "chb01_03" -> "chb01", "syn02_01" -> "syn02"; keys without '_' fall back to
// the header's patient field, then to the key itself.
std::string patient_for(const std::string& recording_key, const std::string& header_patient);

// Sorted *.edf files in `dir`.
std::vector<std::filesystem::path> list_edf(const std::filesystem::path& dir);

// `annotations.csv` if present, otherwise every `*summary.txt` (CHB-MIT
// layout); empty when neither exists.
std::vector<SeizureAnnotation> load_annotations(const std::filesystem::path& dir);

// Reads one EDF, keeps the channels the layout can place and attaches its
// annotations.
LabeledRecording load_recording(const std::filesystem::path& edf,
                                const std::vector<SeizureAnnotation>& annotations,
                                const ElectrodeLayout& layout);

RecordingImages image_recording(const LabeledRecording& rec, const ElectrodeLayout& layout,
                                const ImagingOptions& options = {}, double stride_s = kWindowSeconds,
                                int jobs = 1);

// Sequences of the chosen recordings, in order.
std::vector<ImageSequence> gather_sequences(std::span<const RecordingImages> corpus);

}  // namespace szd
