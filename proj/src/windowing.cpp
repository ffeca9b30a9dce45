#include "szd/windowing.hpp"

#include <algorithm>
#include <cmath>

#include "szd/error.hpp"

namespace szd {

std::size_t WindowSequence::samples_per_block() const {
  return static_cast<std::size_t>(std::llround(recording->sample_rate_hz));
}

double overlap_seconds(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

std::size_t window_count(double duration_s, double stride_s) {
  if (!(stride_s > 0.0)) fail(ErrorKind::kInvalidArgument, "stride must be positive");
  if (duration_s + 1e-9 < kWindowSeconds) return 0;
  return static_cast<std::size_t>(
             std::floor((duration_s - kWindowSeconds) / stride_s + 1e-9)) + 1;
}

std::vector<WindowSequence> segment(std::shared_ptr<const Recording> rec,
                                    std::span<const SeizureAnnotation> annotations,
                                    double stride_s) {
  if (!rec) fail(ErrorKind::kInvalidArgument, "null recording");
  if (rec->duration_s + 1e-9 < kWindowSeconds) {
    fail(ErrorKind::kRecordingTooShort,
         rec->id + " is shorter than one 30 s window");
  }
  const double fs = rec->sample_rate_hz;
  if (std::abs(fs - std::round(fs)) > 1e-9) {
    fail(ErrorKind::kInvalidArgument, "one-second blocks need an integer sample rate");
  }
  const auto own = annotations_for(annotations, *rec);
  const std::size_t count = window_count(rec->duration_s, stride_s);
  std::vector<WindowSequence> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    WindowSequence w;
    w.recording = rec;
    w.recording_ref = rec->id;
    w.patient_id = rec->patient_id;
    w.start_s = static_cast<double>(k) * stride_s;
    w.start_sample = static_cast<std::size_t>(std::llround(w.start_s * fs));
    double overlap = 0.0;
    for (const auto& a : own) {
      overlap += overlap_seconds(w.start_s, w.end_s(), a.onset_s, a.offset_s);
    }
    w.seizure_overlap_s = overlap;
    w.label = overlap > 0.0 ? Label::kSeizure : Label::kNonSeizure;
    w.straddles_boundary = overlap > 0.0 && overlap < kWindowSeconds;
    out.push_back(std::move(w));
  }
  return out;
}

SecondBlocks one_second_blocks(const WindowSequence& w) {
  const std::size_t per = w.samples_per_block();
  const auto& rec = *w.recording;
  SecondBlocks blocks(kSubWindows);
  for (int i = 0; i < kSubWindows; ++i) {
    blocks[i].reserve(rec.channels.size());
    const std::size_t begin = w.start_sample + static_cast<std::size_t>(i) * per;
    for (const auto& ch : rec.channels) {
      if (begin + per > ch.samples.size()) {
        fail(ErrorKind::kInvalidArgument, "window extends past the recording");
      }
      blocks[i].push_back(std::span<const double>(ch.samples).subspan(begin, per));
    }
  }
  return blocks;
}

}  // namespace szd
