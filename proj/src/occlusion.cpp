#include "szd/occlusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "szd/error.hpp"
#include "szd/svg.hpp"

namespace szd {

std::array<int, 2> OcclusionMap::argmax() const {
  std::size_t best = 0;
  for (std::size_t k = 1; k < drops.size(); ++k) {
    if (drops[k] > drops[best]) best = k;
  }
  return {static_cast<int>(best) / cols, static_cast<int>(best) % cols};
}

std::array<double, 2> OcclusionMap::center(int i, int j) const {
  const double half = (size - 1) / 2.0;
  return {i * stride + half, j * stride + half};
}

int occluder_positions(int size, int stride) {
  if (size < 1 || size > kGridSize || stride < 1) {
    fail(ErrorKind::kInvalidArgument, "occluder size must lie in [1, 16] and stride be >= 1");
  }
  return (kGridSize - size) / stride + 1;
}

ImageSequence occlude(const ImageSequence& seq, int r0, int c0, int size, float fill) {
  ImageSequence out = seq;
  for (int f = 0; f < kSubWindows; ++f) {
    auto frame = out.frame(f);
    for (int b = 0; b < kBandCount; ++b) {
      for (int r = r0; r < std::min(kGridSize, r0 + size); ++r) {
        for (int c = c0; c < std::min(kGridSize, c0 + size); ++c) {
          frame[static_cast<std::size_t>(b * kPlaneSize + r * kGridSize + c)] = fill;
        }
      }
    }
  }
  return out;
}

OcclusionMap occlusion_map(const SeizureProbability& predictor, const ImageSequence& normalized,
                           const OcclusionOptions& options) {
  const int n = occluder_positions(options.size, options.stride);
  OcclusionMap map;
  map.rows = map.cols = n;
  map.size = options.size;
  map.stride = options.stride;
  map.fill = options.fill;
  map.baseline_prob = predictor(normalized);
  map.not_positive_baseline = !(map.baseline_prob > 0.5);
  map.drops.assign(static_cast<std::size_t>(n * n), 0.0);
  parallel_for(map.drops.size(), options.jobs, [&](std::size_t k) {
    const int i = static_cast<int>(k) / n, j = static_cast<int>(k) % n;
    const auto masked = occlude(normalized, i * options.stride, j * options.stride, options.size,
                                options.fill);
    map.drops[k] = map.baseline_prob - predictor(masked);
  });
  return map;
}

OcclusionMap occlusion_map(const EnsembleModel& model, const ImageSequence& normalized,
                           const OcclusionOptions& options) {
  return occlusion_map([&](const ImageSequence& s) { return model.predict_normalized(s)[1]; },
                       normalized, options);
}

std::vector<ElectrodeScore> map_to_scalp(const OcclusionMap& map, const ElectrodeLayout& layout) {
  const double extent = layout.grid_extent();
  std::vector<ElectrodeScore> out;
  for (const auto& name : layout.names()) {
    const auto px = nearest_pixel(layout.projected(name), extent);
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < map.rows; ++i) {
      for (int j = 0; j < map.cols; ++j) {
        const int r0 = i * map.stride, c0 = j * map.stride;
        if (px[0] >= r0 && px[0] < r0 + map.size && px[1] >= c0 && px[1] < c0 + map.size) {
          sum += map.at(i, j);
          ++count;
        }
      }
    }
    out.push_back({name, count ? sum / count : 0.0, count > 0});
  }
  std::stable_sort(out.begin(), out.end(), [](const ElectrodeScore& a, const ElectrodeScore& b) {
    if (a.covered != b.covered) return a.covered;
    if (a.score != b.score) return a.score > b.score;
    return a.electrode < b.electrode;
  });
  return out;
}

double argmax_distance(const OcclusionMap& map, Point2 p, double extent) {
  const auto [i, j] = map.argmax();
  const auto c = map.center(i, j);
  const auto q = pixel_coordinates(p, extent);
  return std::max(std::abs(c[0] - q[0]), std::abs(c[1] - q[1]));
}

std::string occlusion_csv(const OcclusionMap& map) {
  std::ostringstream os;
  os << "row,col,pixel_row,pixel_col,drop\n";
  char buf[32];
  for (int i = 0; i < map.rows; ++i) {
    for (int j = 0; j < map.cols; ++j) {
      std::snprintf(buf, sizeof buf, "%.9f", map.at(i, j));
      os << i << ',' << j << ',' << i * map.stride << ',' << j * map.stride << ',' << buf << '\n';
    }
  }
  return os.str();
}

std::string occlusion_svg(const OcclusionMap& map, const ElectrodeLayout& layout,
                          const std::string& title) {
  const double cell = 20.0, margin = 40.0, side = kGridSize * cell;
  svg::Document doc(side + 2 * margin, side + 2 * margin + 30);
  doc.rect(0, 0, side + 2 * margin, side + 2 * margin + 30, "#fff");
  doc.text(margin + side / 2, 24, title.empty() ? "occlusion map" : title, 14, "middle");

  // Each pixel shows the mean drop of the occluders covering it.
  double peak = 0.0;
  for (double d : map.drops) peak = std::max(peak, std::abs(d));
  if (peak == 0.0) peak = 1.0;
  for (int r = 0; r < kGridSize; ++r) {
    for (int c = 0; c < kGridSize; ++c) {
      double sum = 0.0;
      int count = 0;
      for (int i = 0; i < map.rows; ++i) {
        for (int j = 0; j < map.cols; ++j) {
          const int r0 = i * map.stride, c0 = j * map.stride;
          if (r >= r0 && r < r0 + map.size && c >= c0 && c < c0 + map.size) {
            sum += map.at(i, j);
            ++count;
          }
        }
      }
      const double v = count ? sum / count : 0.0;
      doc.rect(margin + c * cell, margin + r * cell, cell, cell, svg::diverging(v / peak));
    }
  }
  const double extent = layout.grid_extent();
  const double h = 2 * extent / kGridSize;
  auto to_xy = [&](Point2 p) {
    // column grows toward -v, row toward -u
    return std::array<double, 2>{margin + (extent - p.v) / h * cell, margin + (extent - p.u) / h * cell};
  };
  const auto centre = to_xy({0.0, 0.0});
  doc.circle(centre[0], centre[1], layout.max_radius() / h * cell, "none", "#444", 1.5);
  for (const auto& name : layout.names()) {
    const auto xy = to_xy(layout.projected(name));
    doc.circle(xy[0], xy[1], 3, "#000", "none", 0);
    doc.text(xy[0] + 4, xy[1] - 4, name, 8);
  }
  const auto [bi, bj] = map.argmax();
  doc.rect(margin + bj * map.stride * cell, margin + bi * map.stride * cell, map.size * cell,
           map.size * cell, "none", "#0a0", 2);
  char buf[96];
  std::snprintf(buf, sizeof buf, "baseline p(seizure) = %.4f, peak drop = %.4f%s", map.baseline_prob,
                map.at(bi, bj), map.not_positive_baseline ? " (baseline not positive)" : "");
  doc.text(margin, side + margin + 22, buf, 10);
  return doc.str();
}

}  // namespace szd
