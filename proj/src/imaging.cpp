#include "szd/imaging.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>

#include "szd/error.hpp"
#include "szd/io_util.hpp"

namespace szd {

Point2 pixel_center(int row, int col, double extent) {
  const double h = 2.0 * extent / kGridSize;
  return {extent - (row + 0.5) * h, extent - (col + 0.5) * h};
}

std::array<double, 2> pixel_coordinates(Point2 p, double extent) {
  const double h = 2.0 * extent / kGridSize;
  return {(extent - p.u) / h - 0.5, (extent - p.v) / h - 0.5};
}

std::array<int, 2> nearest_pixel(Point2 p, double extent) {
  auto rc = pixel_coordinates(p, extent);
  return {std::clamp(static_cast<int>(std::lround(rc[0])), 0, kGridSize - 1),
          std::clamp(static_cast<int>(std::lround(rc[1])), 0, kGridSize - 1)};
}

EEGImage ImageSequence::image(int i) const {
  EEGImage img;
  img.grid_extent = grid_extent;
  auto f = frame(i);
  std::copy(f.begin(), f.end(), img.pixels.begin());
  return img;
}

namespace {

double cubic(double r) { return r * r * r; }

}  // namespace

CubicRbf::CubicRbf(std::span<const Point2> nodes) : nodes_(nodes.begin(), nodes.end()) {
  const auto n = static_cast<Eigen::Index>(nodes_.size());
  if (n < 3) {
    fail(ErrorKind::kTooFewPoints,
         "cubic interpolation needs at least 3 points, got " + std::to_string(n));
  }
  // Affine unisolvence: the centered point cloud must span two dimensions.
  Eigen::MatrixXd centered(n, 2);
  double mu = 0.0, mv = 0.0;
  for (const auto& p : nodes_) {
    mu += p.u;
    mv += p.v;
  }
  mu /= static_cast<double>(n);
  mv /= static_cast<double>(n);
  double scale = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    centered(i, 0) = nodes_[i].u - mu;
    centered(i, 1) = nodes_[i].v - mv;
    scale = std::max(scale, centered.row(i).norm());
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  if (scale == 0.0 || svd.singularValues()(1) <= 1e-9 * scale * std::sqrt(double(n))) {
    fail(ErrorKind::kDegenerateGeometry, "interpolation nodes are collinear");
  }
  const Eigen::Index m = n + 3;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      a(i, j) = cubic(distance(nodes_[i], nodes_[j]));
    }
    a(i, n) = a(n, i) = 1.0;
    a(i, n + 1) = a(n + 1, i) = nodes_[i].u;
    a(i, n + 2) = a(n + 2, i) = nodes_[i].v;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (!lu.isInvertible()) {
    fail(ErrorKind::kDegenerateGeometry, "interpolation system is singular");
  }
  Eigen::MatrixXd inv = lu.inverse();
  inverse_.resize(static_cast<std::size_t>(m * m));
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) inverse_[static_cast<std::size_t>(i * m + j)] = inv(i, j);
  }
}

std::vector<double> CubicRbf::coefficients(std::span<const double> values) const {
  const std::size_t n = nodes_.size();
  if (values.size() != n) fail(ErrorKind::kShapeMismatch, "one value per node expected");
  const std::size_t m = n + 3;
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += inverse_[i * m + j] * values[j];
    out[i] = acc;
  }
  return out;
}

double CubicRbf::evaluate(std::span<const double> coef, Point2 p) const {
  const std::size_t n = nodes_.size();
  double acc = coef[n] + coef[n + 1] * p.u + coef[n + 2] * p.v;
  for (std::size_t j = 0; j < n; ++j) acc += coef[j] * cubic(distance(p, nodes_[j]));
  return acc;
}

std::vector<double> CubicRbf::evaluation_operator(std::span<const Point2> points) const {
  const auto n = static_cast<Eigen::Index>(nodes_.size());
  const Eigen::Index m = n + 3;
  Eigen::MatrixXd basis(static_cast<Eigen::Index>(points.size()), m);
  for (Eigen::Index g = 0; g < basis.rows(); ++g) {
    const Point2 p = points[static_cast<std::size_t>(g)];
    for (Eigen::Index j = 0; j < n; ++j) basis(g, j) = cubic(distance(p, nodes_[j]));
    basis(g, n) = 1.0;
    basis(g, n + 1) = p.u;
    basis(g, n + 2) = p.v;
  }
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      inv(inverse_.data(), m, m);
  Eigen::MatrixXd op = basis * inv.leftCols(n);
  std::vector<double> out(static_cast<std::size_t>(op.rows() * n));
  for (Eigen::Index g = 0; g < op.rows(); ++g) {
    for (Eigen::Index j = 0; j < n; ++j) out[static_cast<std::size_t>(g * n + j)] = op(g, j);
  }
  return out;
}

namespace {

// Groups positions closer than 1e-9; returns node positions and, per input
// point, the index of its node.
std::pair<std::vector<Point2>, std::vector<std::size_t>> merge_nodes(
    std::span<const Point2> positions) {
  std::vector<Point2> nodes;
  std::vector<std::size_t> owner(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    std::size_t k = 0;
    while (k < nodes.size() && distance(nodes[k], positions[i]) > 1e-9) ++k;
    if (k == nodes.size()) nodes.push_back(positions[i]);
    owner[i] = k;
  }
  return {std::move(nodes), std::move(owner)};
}

std::vector<Point2> grid_points(double extent) {
  std::vector<Point2> pts;
  pts.reserve(kPlaneSize);
  for (int r = 0; r < kGridSize; ++r) {
    for (int c = 0; c < kGridSize; ++c) pts.push_back(pixel_center(r, c, extent));
  }
  return pts;
}

// Maps per-point band values to pixels through a precomputed operator.
class GridInterpolator {
 public:
  GridInterpolator(std::span<const Point2> positions, double extent) {
    auto [nodes, owner] = merge_nodes(positions);
    owner_ = std::move(owner);
    counts_.assign(nodes.size(), 0.0);
    for (auto k : owner_) counts_[k] += 1.0;
    CubicRbf rbf(nodes);
    op_ = rbf.evaluation_operator(grid_points(extent));
    nodes_ = nodes.size();
  }

  void fill(std::span<const std::array<double, kBandCount>> values, std::span<float> out) {
    node_values_.assign(nodes_ * kBandCount, 0.0);
    for (std::size_t i = 0; i < owner_.size(); ++i) {
      for (int b = 0; b < kBandCount; ++b) {
        node_values_[owner_[i] * kBandCount + b] += values[i][b] / counts_[owner_[i]];
      }
    }
    for (int g = 0; g < kPlaneSize; ++g) {
      const double* row = op_.data() + static_cast<std::size_t>(g) * nodes_;
      double acc[kBandCount] = {0.0, 0.0, 0.0};
      for (std::size_t j = 0; j < nodes_; ++j) {
        for (int b = 0; b < kBandCount; ++b) acc[b] += row[j] * node_values_[j * kBandCount + b];
      }
      for (int b = 0; b < kBandCount; ++b) out[b * kPlaneSize + g] = static_cast<float>(acc[b]);
    }
  }

 private:
  std::vector<std::size_t> owner_;
  std::vector<double> counts_;
  std::vector<double> op_;
  std::vector<double> node_values_;
  std::size_t nodes_ = 0;
};

}  // namespace

EEGImage interpolate_image(std::span<const Point2> positions,
                           std::span<const std::array<double, kBandCount>> values,
                           double extent) {
  if (positions.size() != values.size()) {
    fail(ErrorKind::kShapeMismatch, "one value triple per position expected");
  }
  GridInterpolator interp(positions, extent);
  EEGImage img;
  img.grid_extent = extent;
  interp.fill(values, img.pixels);
  return img;
}

ImageSequence window_to_sequence(const WindowSequence& w, const ElectrodeLayout& layout,
                                 const ImagingOptions& options) {
  const auto& rec = *w.recording;
  std::vector<std::size_t> used;
  std::vector<Point2> positions;
  for (std::size_t c = 0; c < rec.channels.size(); ++c) {
    if (options.excluded_channels.count(rec.channels[c].label)) continue;
    positions.push_back(bipolar_position(layout, rec.channels[c].label));
    used.push_back(c);
  }
  const double extent = layout.grid_extent();
  GridInterpolator interp(positions, extent);

  ImageSequence seq;
  seq.data.resize(kSequenceSize);
  seq.grid_extent = extent;
  seq.label = w.label;
  seq.patient_id = w.patient_id;
  seq.recording_ref = w.recording_ref;
  seq.start_s = w.start_s;
  seq.straddles_boundary = w.straddles_boundary;

  const auto blocks = one_second_blocks(w);
  std::vector<std::array<double, kBandCount>> values(used.size());
  for (int i = 0; i < kSubWindows; ++i) {
    for (std::size_t k = 0; k < used.size(); ++k) {
      values[k] = band_magnitudes(blocks[i][used[k]], rec.sample_rate_hz);
    }
    interp.fill(values, seq.frame(i));
  }
  return seq;
}

std::vector<ImageSequence> windows_to_sequences(std::span<const WindowSequence> windows,
                                                const ElectrodeLayout& layout,
                                                const ImagingOptions& options) {
  std::vector<ImageSequence> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(window_to_sequence(w, layout, options));
  return out;
}

Normalizer Normalizer::fit(std::span<const ImageSequence> train) {
  if (train.empty()) fail(ErrorKind::kEmptySplit, "normalizer needs training data");
  std::array<double, kBandCount> sum{}, sum_sq{};
  double count = 0.0;
  for (const auto& seq : train) {
    for (int f = 0; f < kSubWindows; ++f) {
      auto frame = seq.frame(f);
      for (int b = 0; b < kBandCount; ++b) {
        for (int g = 0; g < kPlaneSize; ++g) {
          const double x = frame[b * kPlaneSize + g];
          sum[b] += x;
        }
      }
    }
    count += kSubWindows * kPlaneSize;
  }
  Normalizer n;
  for (int b = 0; b < kBandCount; ++b) n.mean[b] = sum[b] / count;
  // Second pass around the mean for a stable variance.
  for (const auto& seq : train) {
    for (int f = 0; f < kSubWindows; ++f) {
      auto frame = seq.frame(f);
      for (int b = 0; b < kBandCount; ++b) {
        for (int g = 0; g < kPlaneSize; ++g) {
          const double d = frame[b * kPlaneSize + g] - n.mean[b];
          sum_sq[b] += d * d;
        }
      }
    }
  }
  for (int b = 0; b < kBandCount; ++b) n.stddev[b] = std::sqrt(sum_sq[b] / count);
  return n;
}

void Normalizer::apply(ImageSequence& seq) const {
  for (int f = 0; f < kSubWindows; ++f) {
    auto frame = seq.frame(f);
    for (int b = 0; b < kBandCount; ++b) {
      const double scale = stddev[b] > 0.0 ? 1.0 / stddev[b] : 1.0;
      for (int g = 0; g < kPlaneSize; ++g) {
        float& x = frame[b * kPlaneSize + g];
        x = static_cast<float>((x - mean[b]) * scale);
      }
    }
  }
}

ImageSequence Normalizer::applied(const ImageSequence& seq) const {
  ImageSequence out = seq;
  apply(out);
  return out;
}

std::pair<Normalizer, std::vector<ImageSequence>> normalize_sequences(
    std::span<const ImageSequence> train) {
  Normalizer n = Normalizer::fit(train);
  std::vector<ImageSequence> out(train.begin(), train.end());
  for (auto& s : out) n.apply(s);
  return {n, std::move(out)};
}

void write_image_dump(const EEGImage& image, const std::filesystem::path& path) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
    std::string bytes;
    for (float v : image.pixels) put_f32(bytes, v);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  std::ofstream manifest(path.string() + ".txt");
  if (!manifest) fail(ErrorKind::kIo, "cannot write manifest for " + path.string());
  manifest << "format float32-le\n"
           << "shape " << kBandCount << " " << kGridSize << " " << kGridSize << "\n"
           << "bands 0-7Hz 7-14Hz 14-49Hz\n"
           << "extent " << image.grid_extent << "\n"
           << "rows anterior-to-posterior\ncolumns left-to-right\n";
}

}  // namespace szd
