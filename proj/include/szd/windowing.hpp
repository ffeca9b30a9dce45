#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "szd/edf_io.hpp"

namespace szd {

enum class Label : std::uint8_t { kNonSeizure = 0, kSeizure = 1 };

inline constexpr int kSubWindows = 30;
inline constexpr double kWindowSeconds = 30.0;

// A 30 s labeled segment. Samples stay in the shared recording; the window
// only records where it starts.
struct WindowSequence {
  std::shared_ptr<const Recording> recording;
  std::string recording_ref;
  std::string patient_id;
  double start_s = 0.0;
  std::size_t start_sample = 0;
  Label label = Label::kNonSeizure;
  double seizure_overlap_s = 0.0;
  // Seizure window that only partially overlaps its annotation(s).
  bool straddles_boundary = false;

  std::size_t samples_per_block() const;
  double end_s() const { return start_s + kWindowSeconds; }
};

// block[i][c] is channel c's samples for second i of the window.
using SecondBlocks = std::vector<std::vector<std::span<const double>>>;

std::vector<WindowSequence> segment(std::shared_ptr<const Recording> rec,
                                    std::span<const SeizureAnnotation> annotations,
                                    double stride_s = kWindowSeconds);

SecondBlocks one_second_blocks(const WindowSequence& w);

// Number of windows `segment` yields for a recording of `duration_s`.
std::size_t window_count(double duration_s, double stride_s);

// Length of the intersection of [a0, a1) and [b0, b1).
double overlap_seconds(double a0, double a1, double b0, double b1);

}  // namespace szd
