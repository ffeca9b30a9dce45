#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace szd {

// Half-open integer-frequency bands over a 1 s block, in Hz.
struct Band {
  int lo_hz;
  int hi_hz;
};
inline constexpr std::array<Band, 3> kBands{{{0, 7}, {7, 14}, {14, 49}}};
inline constexpr int kBandCount = static_cast<int>(kBands.size());

struct BandMagnitudes {
  std::string electrode;
  std::array<double, kBandCount> bands{};
};

// Sum of |X(k)| over integer bins of each band, DC excluded, no taper.
// The block must hold exactly round(sample_rate_hz) samples.
std::array<double, kBandCount> band_magnitudes(std::span<const double> block,
                                               double sample_rate_hz);

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

struct Point2 {
  double u = 0.0, v = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

double distance(Point2 a, Point2 b);

// Azimuthal equidistant projection about the vertex (0, 0, 1):
// (u, v) = theta * (cos phi, sin phi), theta = acos z, phi = atan2(y, x).
Point2 polar_project(Vec3 xyz);

class ElectrodeLayout {
 public:
  struct Entry {
    Vec3 position;
    Point2 projected;
  };

  // 19 standard 10-20 electrodes; T3/T4/T5/T6 resolve to T7/T8/P7/P8.
  static const ElectrodeLayout& standard_1020();
  // Text table: `name x y z` per line, '#' comments allowed.
  static ElectrodeLayout parse(std::string_view table);

  void add(const std::string& name, Vec3 position);

  const Entry* find(std::string_view name) const;
  Point2 projected(std::string_view name) const;
  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  // Largest projected radius over all electrodes.
  double max_radius() const;
  // Half-width of the image grid used with this layout.
  double grid_extent() const { return 1.1 * max_radius(); }

 private:
  std::map<std::string, Entry> entries_;
};

extern const char* const kStandard1020Table;

// Upper-cases and applies the T3->T7, T4->T8, T5->P7, T6->P8 synonyms.
std::string normalize_electrode_name(std::string_view name);

// Electrode names in a channel label: "CZ" -> {CZ}, "FP1-F7" -> {FP1, F7}.
// A trailing numeric suffix added for duplicate labels ("T8-P8-1") is dropped.
std::vector<std::string> channel_electrodes(std::string_view label);

// Single electrode -> its projection; bipolar "A-B" -> midpoint of A and B.
Point2 bipolar_position(const ElectrodeLayout& layout, std::string_view channel_label);

bool is_resolvable(const ElectrodeLayout& layout, std::string_view channel_label);

}  // namespace szd
