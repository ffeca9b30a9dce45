#pragma once

// Small in-memory image sequences for fast training tests: positives carry a
// bright blob in band 0, negatives are noise only.

#include <cmath>
#include <string>
#include <vector>

#include "szd/imaging.hpp"
#include "szd/random.hpp"

namespace szd::testing {

inline ImageSequence toy_sequence(Rng& rng, bool positive, double blob_row = 4.0, double blob_col = 11.0,
                                  double amplitude = 2.0) {
  ImageSequence s;
  s.data.resize(kSequenceSize);
  s.label = positive ? Label::kSeizure : Label::kNonSeizure;
  s.patient_id = "toy";
  s.recording_ref = "toy_01";
  for (int f = 0; f < kSubWindows; ++f) {
    auto fr = s.frame(f);
    for (int b = 0; b < kBandCount; ++b) {
      for (int r = 0; r < kGridSize; ++r) {
        for (int c = 0; c < kGridSize; ++c) {
          double v = 0.5 * rng.normal();
          if (positive && b == 0) {
            const double d2 = (r - blob_row) * (r - blob_row) + (c - blob_col) * (c - blob_col);
            v += amplitude * std::exp(-d2 / 3.0);
          }
          fr[b * kPlaneSize + r * kGridSize + c] = static_cast<float>(v);
        }
      }
    }
  }
  return s;
}

inline std::vector<ImageSequence> toy_set(std::uint64_t seed, int positives, int negatives) {
  Rng rng(seed);
  std::vector<ImageSequence> out;
  for (int i = 0; i < positives + negatives; ++i) {
    out.push_back(toy_sequence(rng, i % (positives + negatives) < positives));
    out.back().start_s = 30.0 * i;
  }
  return out;
}

}  // namespace szd::testing
