#pragma once

#include <array>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "szd/spectral_montage.hpp"
#include "szd/windowing.hpp"

namespace szd {

inline constexpr int kGridSize = 16;
inline constexpr int kPlaneSize = kGridSize * kGridSize;
inline constexpr int kImageSize = kBandCount * kPlaneSize;
inline constexpr int kSequenceSize = kSubWindows * kImageSize;

// Pixel (row, col) of the square grid [-extent, extent]^2. Row 0 is the most
// anterior row (+u), column 0 the most leftward column (+v), so the image reads
// like a scalp map seen from above with the nose at the top.
Point2 pixel_center(int row, int col, double extent);
// Fractional (row, col) of a projected point.
std::array<double, 2> pixel_coordinates(Point2 p, double extent);
std::array<int, 2> nearest_pixel(Point2 p, double extent);

struct EEGImage {
  std::array<float, kImageSize> pixels{};  // band-major, then row, then column
  double grid_extent = 1.0;

  float at(int band, int row, int col) const {
    return pixels[static_cast<std::size_t>(band * kPlaneSize + row * kGridSize + col)];
  }
  float& at(int band, int row, int col) {
    return pixels[static_cast<std::size_t>(band * kPlaneSize + row * kGridSize + col)];
  }
};

struct ImageSequence {
  std::vector<float> data;  // kSubWindows x kBandCount x kGridSize x kGridSize
  double grid_extent = 1.0;
  Label label = Label::kNonSeizure;
  std::string patient_id;
  std::string recording_ref;
  double start_s = 0.0;
  bool straddles_boundary = false;

  std::span<const float> frame(int i) const {
    return std::span<const float>(data).subspan(static_cast<std::size_t>(i) * kImageSize,
                                                kImageSize);
  }
  std::span<float> frame(int i) {
    return std::span<float>(data).subspan(static_cast<std::size_t>(i) * kImageSize,
                                          kImageSize);
  }
  EEGImage image(int i) const;
};

// Cubic radial-basis interpolant phi(r) = r^3 plus an affine polynomial.
// Coincident nodes are not allowed; callers merge them first.
class CubicRbf {
 public:
  explicit CubicRbf(std::span<const Point2> nodes);

  std::size_t node_count() const { return nodes_.size(); }
  // Weights (n) followed by the affine coefficients (c0, cu, cv).
  std::vector<double> coefficients(std::span<const double> values) const;
  double evaluate(std::span<const double> coefficients, Point2 p) const;
  // Row-major (points x nodes) matrix mapping node values to values at `points`.
  std::vector<double> evaluation_operator(std::span<const Point2> points) const;

 private:
  std::vector<Point2> nodes_;
  std::vector<double> inverse_;  // (n + 3)^2, row-major
};

// Interpolates each band independently onto the 16x16 grid over
// [-extent, extent]^2. Nodes closer than 1e-9 are merged by averaging.
EEGImage interpolate_image(std::span<const Point2> positions,
                           std::span<const std::array<double, kBandCount>> values,
                           double extent);

struct ImagingOptions {
  // Channel labels left out of the image (the missing-channel path).
  std::set<std::string> excluded_channels;
};

ImageSequence window_to_sequence(const WindowSequence& w, const ElectrodeLayout& layout,
                                 const ImagingOptions& options = {});

std::vector<ImageSequence> windows_to_sequences(std::span<const WindowSequence> windows,
                                                const ElectrodeLayout& layout,
                                                const ImagingOptions& options = {});

// Per-band standardization with statistics from the training split.
struct Normalizer {
  std::array<double, kBandCount> mean{};
  std::array<double, kBandCount> stddev{1.0, 1.0, 1.0};

  static Normalizer fit(std::span<const ImageSequence> train);
  void apply(ImageSequence& seq) const;
  ImageSequence applied(const ImageSequence& seq) const;
};

std::pair<Normalizer, std::vector<ImageSequence>> normalize_sequences(
    std::span<const ImageSequence> train);

// Debug dump: raw little-endian float32 planes plus `<path>.txt` manifest.
void write_image_dump(const EEGImage& image, const std::filesystem::path& path);

}  // namespace szd
