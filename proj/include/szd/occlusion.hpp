#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "szd/imaging.hpp"
#include "szd/model.hpp"
#include "szd/spectral_montage.hpp"
#include "szd/training.hpp"

namespace szd {

struct OcclusionOptions {
  int size = 4;
  int stride = 2;
  float fill = 0.0f;
  int jobs = 1;
};

struct OcclusionMap {
  int rows = 0;
  int cols = 0;
  int size = 4;
  int stride = 2;
  float fill = 0.0f;
  double baseline_prob = 0.0;
  // Baseline did not classify the sequence as a seizure; the map is still
  // computed but should be read with care.
  bool not_positive_baseline = false;
  std::vector<double> drops;  // rows x cols, row-major

  double at(int i, int j) const { return drops[static_cast<std::size_t>(i * cols + j)]; }
  // Position with the largest drop; the first one in row-major order on ties.
  std::array<int, 2> argmax() const;
  // Fractional pixel (row, col) at the centre of occluder (i, j).
  std::array<double, 2> center(int i, int j) const;
};

// p(seizure) for a normalized sequence.
using SeizureProbability = std::function<double(const ImageSequence&)>;

// Occluder positions per axis: floor((16 - size) / stride) + 1.
int occluder_positions(int size, int stride);

// Masks a size x size patch in every band and every frame, re-runs the
// predictor and records baseline - occluded.
OcclusionMap occlusion_map(const SeizureProbability& predictor, const ImageSequence& normalized,
                           const OcclusionOptions& options = {});
OcclusionMap occlusion_map(const EnsembleModel& model, const ImageSequence& normalized,
                           const OcclusionOptions& options = {});

// Copy of `seq` with the patch at pixel (r0, c0) set to `fill`.
ImageSequence occlude(const ImageSequence& seq, int r0, int c0, int size, float fill);

struct ElectrodeScore {
  std::string electrode;
  double score = 0.0;
  bool covered = false;  // some occluder covers the electrode's pixel
};

// Each electrode scores the mean drop over the occluders covering its pixel.
// Descending by score, ties by name; uncovered electrodes come last.
std::vector<ElectrodeScore> map_to_scalp(const OcclusionMap& map, const ElectrodeLayout& layout);

// Chebyshev distance in pixels between the argmax occluder centre and `p`.
double argmax_distance(const OcclusionMap& map, Point2 p, double extent);

std::string occlusion_csv(const OcclusionMap& map);
std::string occlusion_svg(const OcclusionMap& map, const ElectrodeLayout& layout,
                          const std::string& title = {});

}  // namespace szd
