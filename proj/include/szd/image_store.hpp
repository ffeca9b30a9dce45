#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "szd/edf_io.hpp"
#include "szd/imaging.hpp"

namespace szd {

// Every image sequence of one recording together with the bookkeeping the
// evaluation protocols need. Sequences are in time order.
struct RecordingImages {
  std::string recording_ref;
  std::string patient_id;
  double duration_s = 0.0;
  double stride_s = kWindowSeconds;
  std::vector<std::string> channels;
  std::vector<SeizureAnnotation> annotations;
  std::vector<ImageSequence> sequences;
};

// One file pair per recording: `<ref>.szi` (binary planes) and `<ref>.txt`
// (manifest). Layout in docs/image_store.md.
void write_recording_images(const RecordingImages& rec, const std::filesystem::path& dir);
RecordingImages read_recording_images(const std::filesystem::path& dir, const std::string& ref);
// All recordings in `dir`, sorted by reference.
std::vector<RecordingImages> read_image_store(const std::filesystem::path& dir);
std::vector<std::string> list_image_store(const std::filesystem::path& dir);

void write_normalizer(const Normalizer& n, const std::filesystem::path& path);
Normalizer read_normalizer(const std::filesystem::path& path);

}  // namespace szd
