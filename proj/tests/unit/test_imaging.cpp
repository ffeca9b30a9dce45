#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "doctest.h"
#include "szd/error.hpp"
#include "szd/imaging.hpp"
#include "szd/random.hpp"
#include "szd/synth.hpp"

using namespace szd;

namespace {

std::vector<Point2> standard_points(const ElectrodeLayout& L) {
  std::vector<Point2> out;
  for (const auto& n : L.names()) out.push_back(L.projected(n));
  return out;
}

std::array<int, 2> argmax_pixel(const EEGImage& img, int band) {
  std::array<int, 2> best{0, 0};
  float v = img.at(band, 0, 0);
  for (int r = 0; r < kGridSize; ++r) {
    for (int c = 0; c < kGridSize; ++c) {
      if (img.at(band, r, c) > v) {
        v = img.at(band, r, c);
        best = {r, c};
      }
    }
  }
  return best;
}

// Pixels whose centres are closest to `p`; more than one when `p` sits on a
// pixel boundary.
std::vector<std::array<int, 2>> nearest_pixels(Point2 p, double extent) {
  const auto f = pixel_coordinates(p, extent);
  std::vector<std::array<int, 2>> out;
  double best = 1e300;
  for (int r = 0; r < kGridSize; ++r) {
    for (int c = 0; c < kGridSize; ++c) {
      const double d = (r - f[0]) * (r - f[0]) + (c - f[1]) * (c - f[1]);
      if (d < best - 1e-9) {
        best = d;
        out.clear();
      }
      if (d <= best + 1e-9) out.push_back({r, c});
    }
  }
  return out;
}

bool is_nearest(std::array<int, 2> px, Point2 p, double extent) {
  const auto n = nearest_pixels(p, extent);
  return std::find(n.begin(), n.end(), px) != n.end();
}

// Argmax restricted to pixels whose centre lies on the scalp disk.
std::array<int, 2> scalp_argmax(const EEGImage& img, int band, const ElectrodeLayout& L) {
  std::array<int, 2> best{-1, -1};
  float v = 0;
  for (int r = 0; r < kGridSize; ++r) {
    for (int c = 0; c < kGridSize; ++c) {
      const auto p = pixel_center(r, c, L.grid_extent());
      if (std::hypot(p.u, p.v) > L.max_radius()) continue;
      if (best[0] < 0 || img.at(band, r, c) > v) {
        v = img.at(band, r, c);
        best = {r, c};
      }
    }
  }
  return best;
}

// `px` touches (8-neighbourhood) one of the pixels nearest to `p`.
bool adjacent_to_nearest(std::array<int, 2> px, Point2 p, double extent) {
  for (const auto& n : nearest_pixels(p, extent)) {
    if (std::abs(px[0] - n[0]) <= 1 && std::abs(px[1] - n[1]) <= 1) return true;
  }
  return false;
}

// 18-channel bipolar recording, 30 s, with a 10 Hz sine on channel `hot` (or none).
std::shared_ptr<const Recording> montage_recording(int hot) {
  auto rec = std::make_shared<Recording>();
  rec->id = "m_01";
  rec->patient_id = "m";
  rec->duration_s = 30;
  for (std::size_t c = 0; c < synth_montage().size(); ++c) {
    ChannelSignal ch;
    ch.label = synth_montage()[c];
    ch.samples.assign(256 * 30, 0.0);
    if (static_cast<int>(c) == hot) {
      for (std::size_t i = 0; i < ch.samples.size(); ++i) {
        ch.samples[i] = 50.0 * std::sin(2 * std::numbers::pi * 10.0 * static_cast<double>(i) / 256.0);
      }
    }
    rec->channels.push_back(std::move(ch));
  }
  return rec;
}

}  // namespace

TEST_SUITE("imaging") {
  TEST_CASE("interpolant is exact at the nodes") {
    const auto& L = ElectrodeLayout::standard_1020();
    const auto pts = standard_points(L);
    CubicRbf rbf(pts);
    Rng rng(1);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> vals(pts.size());
      for (auto& v : vals) v = rng.uniform(-100, 100);
      const auto coef = rbf.coefficients(vals);
      for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(std::abs(rbf.evaluate(coef, pts[i]) - vals[i]) <= 1e-6 * std::max(1.0, std::abs(vals[i])));
      }
    }
  }

  TEST_CASE("constant field is reproduced on every pixel") {
    const auto& L = ElectrodeLayout::standard_1020();
    const auto pts = standard_points(L);
    std::vector<std::array<double, kBandCount>> vals(pts.size(), {3.5, -2.0, 100.0});
    const EEGImage img = interpolate_image(pts, vals, L.grid_extent());
    for (int b = 0; b < 3; ++b) {
      for (int r = 0; r < 16; ++r) {
        for (int c = 0; c < 16; ++c) CHECK(img.at(b, r, c) == doctest::Approx(vals[0][b]).epsilon(1e-5));
      }
    }
  }

  TEST_CASE("single active electrode peaks at its nearest pixel") {
    const auto& L = ElectrodeLayout::standard_1020();
    const auto pts = standard_points(L);
    for (std::size_t k = 0; k < pts.size(); ++k) {
      std::vector<std::array<double, kBandCount>> vals(pts.size(), {0, 0, 0});
      vals[k] = {1, 1, 1};
      const EEGImage img = interpolate_image(pts, vals, L.grid_extent());
      CAPTURE(L.names()[k]);
      CHECK(is_nearest(argmax_pixel(img, 0), pts[k], L.grid_extent()));
    }
  }

  TEST_CASE("single active electrode peaks next to it on the scalp") {
    const auto& L = ElectrodeLayout::standard_1020();
    const auto pts = standard_points(L);
    for (std::size_t k = 0; k < pts.size(); ++k) {
      std::vector<std::array<double, kBandCount>> vals(pts.size(), {0, 0, 0});
      vals[k] = {1, 1, 1};
      const EEGImage img = interpolate_image(pts, vals, L.grid_extent());
      CAPTURE(L.names()[k]);
      CHECK(adjacent_to_nearest(scalp_argmax(img, 0, L), pts[k], L.grid_extent()));
    }
  }

  TEST_CASE("amplitude linearity") {
    const auto& L = ElectrodeLayout::standard_1020();
    const auto pts = standard_points(L);
    Rng rng(2);
    std::vector<std::array<double, kBandCount>> vals(pts.size()), scaled(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (int b = 0; b < 3; ++b) {
        vals[i][b] = rng.uniform(0, 10);
        scaled[i][b] = 2.5 * vals[i][b];
      }
    }
    const auto a = interpolate_image(pts, vals, 2.0);
    const auto b = interpolate_image(pts, scaled, 2.0);
    for (int i = 0; i < kImageSize; ++i) CHECK(b.pixels[i] == doctest::Approx(2.5 * a.pixels[i]).epsilon(1e-4));
  }

  TEST_CASE("degenerate node sets") {
    auto kind_of = [](std::vector<Point2> pts) {
      try {
        CubicRbf r(pts);
      } catch (const Error& e) {
        return e.kind();
      }
      return ErrorKind::kIo;
    };
    CHECK(kind_of({{0, 0}, {1, 0}}) == ErrorKind::kTooFewPoints);
    CHECK(kind_of({{0, 0}, {1, 1}, {2, 2}, {3, 3}}) == ErrorKind::kDegenerateGeometry);
    CHECK(kind_of({{0, 0}, {1, 0}, {0, 1}}) == ErrorKind::kIo);
  }

  TEST_CASE("coincident nodes are merged by averaging") {
    std::vector<Point2> pts{{0, 0}, {1, 0}, {0, 1}, {1, 0}};
    std::vector<std::array<double, kBandCount>> vals{{0, 0, 0}, {2, 2, 2}, {0, 0, 0}, {4, 4, 4}};
    CHECK_NOTHROW(interpolate_image(pts, vals, 1.5));
  }

  TEST_CASE("pixel geometry") {
    const double e = 2.0;
    CHECK(pixel_center(0, 0, e).u > 0);
    CHECK(pixel_center(0, 0, e).v > 0);
    for (int r = 0; r < 16; ++r) {
      for (int c = 0; c < 16; ++c) {
        CHECK(nearest_pixel(pixel_center(r, c, e), e) == std::array<int, 2>{r, c});
      }
    }
  }

  TEST_CASE("zero window gives an all-zero sequence") {
    const auto rec = montage_recording(-1);
    const auto w = segment(rec, {});
    const auto seq = window_to_sequence(w[0], ElectrodeLayout::standard_1020());
    REQUIRE(seq.data.size() == static_cast<std::size_t>(kSequenceSize));
    for (float v : seq.data) REQUIRE(v == doctest::Approx(0.0).epsilon(1e-6));
  }

  TEST_CASE("a sine on one channel peaks at that channel's pixel in band 2") {
    const auto& L = ElectrodeLayout::standard_1020();
    for (int hot = 0; hot < static_cast<int>(synth_montage().size()); ++hot) {
      const auto rec = montage_recording(hot);
      const auto w = segment(rec, {});
      const auto seq = window_to_sequence(w[0], L);
      const auto pos = bipolar_position(L, synth_montage()[hot]);
      CAPTURE(synth_montage()[hot]);
      for (int f = 0; f < kSubWindows; ++f) CHECK(is_nearest(argmax_pixel(seq.image(f), 1), pos, L.grid_extent()));
    }
  }

  TEST_CASE("a sine on one channel peaks next to that channel on the scalp") {
    const auto& L = ElectrodeLayout::standard_1020();
    for (int hot = 0; hot < static_cast<int>(synth_montage().size()); ++hot) {
      const auto rec = montage_recording(hot);
      const auto seq = window_to_sequence(segment(rec, {})[0], L);
      const auto pos = bipolar_position(L, synth_montage()[hot]);
      CAPTURE(synth_montage()[hot]);
      for (int f = 0; f < kSubWindows; ++f) CHECK(adjacent_to_nearest(scalp_argmax(seq.image(f), 1, L), pos, L.grid_extent()));
    }
  }

  TEST_CASE("dropping channels still yields finite images") {
    const auto& L = ElectrodeLayout::standard_1020();
    const auto rec = montage_recording(4);
    const auto w = segment(rec, {});
    for (const auto& ch : synth_montage()) {
      ImagingOptions opt;
      opt.excluded_channels = {ch};
      const auto seq = window_to_sequence(w[0], L, opt);
      for (float v : seq.data) REQUIRE(std::isfinite(v));
    }
    ImagingOptions three;
    three.excluded_channels = {synth_montage()[0], synth_montage()[5], synth_montage()[10]};
    CHECK(window_to_sequence(w[0], L, three).data.size() == static_cast<std::size_t>(kSequenceSize));
  }

  TEST_CASE("normalizer statistics") {
    Rng rng(4);
    std::vector<ImageSequence> train(3);
    for (auto& s : train) {
      s.data.resize(kSequenceSize);
      for (int f = 0; f < kSubWindows; ++f) {
        auto fr = s.frame(f);
        for (int b = 0; b < 3; ++b) {
          for (int g = 0; g < kPlaneSize; ++g) fr[b * kPlaneSize + g] = static_cast<float>(10 * b + rng.normal() * (b + 1));
        }
      }
    }
    auto [norm, out] = normalize_sequences(train);
    for (int b = 0; b < 3; ++b) {
      double sum = 0, sq = 0, n = 0;
      for (const auto& s : out) {
        for (int f = 0; f < kSubWindows; ++f) {
          for (int g = 0; g < kPlaneSize; ++g) {
            const double x = s.frame(f)[b * kPlaneSize + g];
            sum += x;
            sq += x * x;
            n += 1;
          }
        }
      }
      CHECK(std::abs(sum / n) < 1e-6);
      CHECK(std::abs(std::sqrt(sq / n - (sum / n) * (sum / n)) - 1.0) < 1e-6);
    }
    // Held-out data uses the stored statistics.
    ImageSequence held;
    held.data.assign(kSequenceSize, 1000.0f);
    const auto h = norm.applied(held);
    CHECK(h.data[0] == doctest::Approx((1000.0 - norm.mean[0]) / norm.stddev[0]).epsilon(1e-5));
  }

  TEST_CASE("constant training pixels normalize to zero") {
    std::vector<ImageSequence> train(2);
    for (auto& s : train) s.data.assign(kSequenceSize, 7.0f);
    auto [norm, out] = normalize_sequences(train);
    CHECK(norm.stddev[0] == 0.0);
    for (const auto& s : out) {
      for (float v : s.data) REQUIRE(v == 0.0f);
    }
  }
}
