#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "szd/error.hpp"
#include "szd/occlusion.hpp"
#include "szd/random.hpp"

using namespace szd;

namespace {

ImageSequence random_sequence(std::uint64_t seed) {
  Rng rng(seed);
  ImageSequence s;
  s.data.resize(kSequenceSize);
  for (auto& v : s.data) v = static_cast<float>(rng.normal());
  return s;
}

// Predictor that is a sigmoid of a fixed weighted pixel sum, so occlusion
// effects are easy to reason about.
SeizureProbability linear_predictor(std::vector<float> weights) {
  return [w = std::move(weights)](const ImageSequence& s) {
    double z = 0.0;
    for (int f = 0; f < kSubWindows; ++f) {
      const auto fr = s.frame(f);
      for (int i = 0; i < kImageSize; ++i) z += w[i] * fr[i];
    }
    return 1.0 / (1.0 + std::exp(-z / kSubWindows));
  };
}

OcclusionMap map_with(std::vector<double> drops, int size = 4, int stride = 2) {
  OcclusionMap m;
  m.rows = m.cols = occluder_positions(size, stride);
  m.size = size;
  m.stride = stride;
  m.drops = std::move(drops);
  m.drops.resize(static_cast<std::size_t>(m.rows * m.cols), 0.0);
  return m;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kIo;
}

}  // namespace

TEST_SUITE("occlusion") {
  TEST_CASE("occluder position count") {
    for (int size = 1; size <= 16; ++size) {
      for (int stride = 1; stride <= 5; ++stride) CHECK(occluder_positions(size, stride) == (16 - size) / stride + 1);
    }
    CHECK(occluder_positions(4, 2) == 7);
    CHECK(occluder_positions(16, 3) == 1);
    CHECK(kind_of([] { occluder_positions(0, 1); }) == ErrorKind::kInvalidArgument);
    CHECK(kind_of([] { occluder_positions(17, 1); }) == ErrorKind::kInvalidArgument);
    CHECK(kind_of([] { occluder_positions(4, 0); }) == ErrorKind::kInvalidArgument);
  }

  TEST_CASE("occlude only touches the patch") {
    const auto s = random_sequence(1);
    const auto o = occlude(s, 3, 5, 4, 9.0f);
    for (int f = 0; f < kSubWindows; ++f) {
      for (int b = 0; b < kBandCount; ++b) {
        for (int r = 0; r < 16; ++r) {
          for (int c = 0; c < 16; ++c) {
            const std::size_t k = static_cast<std::size_t>(b * kPlaneSize + r * 16 + c);
            const bool inside = r >= 3 && r < 7 && c >= 5 && c < 9;
            CHECK(o.frame(f)[k] == (inside ? 9.0f : s.frame(f)[k]));
          }
        }
      }
    }
  }

  TEST_CASE("a region with zero weight has zero drop") {
    std::vector<float> w(kImageSize, 0.0f);
    for (int b = 0; b < kBandCount; ++b) w[b * kPlaneSize + 12 * 16 + 12] = 1.0f;
    const auto map = occlusion_map(linear_predictor(w), random_sequence(2));
    for (int i = 0; i < map.rows; ++i) {
      for (int j = 0; j < map.cols; ++j) {
        const bool covers = 12 >= i * 2 && 12 < i * 2 + 4 && 12 >= j * 2 && 12 < j * 2 + 4;
        if (!covers) CHECK(map.at(i, j) == 0.0);
      }
    }
  }

  TEST_CASE("full-image occluder equals the constant-image response") {
    Rng rng(3);
    std::vector<float> w(kImageSize);
    for (auto& v : w) v = static_cast<float>(0.05 * rng.normal());
    const auto pred = linear_predictor(w);
    const auto s = random_sequence(4);
    for (float fill : {0.0f, 0.7f}) {
      const auto map = occlusion_map(pred, s, {16, 1, fill, 1});
      REQUIRE(map.drops.size() == 1);
      ImageSequence flat = s;
      std::fill(flat.data.begin(), flat.data.end(), fill);
      CHECK(map.at(0, 0) == doctest::Approx(pred(s) - pred(flat)));
    }
  }

  TEST_CASE("fill equal to the existing values gives no drop") {
    ImageSequence s;
    s.data.assign(kSequenceSize, 0.25f);
    Rng rng(5);
    std::vector<float> w(kImageSize);
    for (auto& v : w) v = static_cast<float>(rng.normal());
    const auto map = occlusion_map(linear_predictor(w), s, {4, 2, 0.25f, 1});
    for (double d : map.drops) CHECK(d == 0.0);
  }

  TEST_CASE("map is deterministic across job counts") {
    Rng rng(6);
    std::vector<float> w(kImageSize);
    for (auto& v : w) v = static_cast<float>(0.1 * rng.normal());
    const auto s = random_sequence(7);
    const auto a = occlusion_map(linear_predictor(w), s, {4, 2, 0.0f, 1});
    const auto b = occlusion_map(linear_predictor(w), s, {4, 2, 0.0f, 3});
    CHECK(a.drops == b.drops);
    CHECK(a.baseline_prob == b.baseline_prob);
  }

  TEST_CASE("argmax and centre") {
    auto m = map_with({});
    m.drops[3 * 7 + 5] = 0.4;
    m.drops[6 * 7 + 1] = 0.4;
    CHECK(m.argmax() == std::array<int, 2>{3, 5});
    CHECK(m.center(3, 5) == std::array<double, 2>{7.5, 11.5});
  }

  TEST_CASE("uniform map ties are broken by name") {
    const auto layout = ElectrodeLayout::standard_1020();
    const auto scores = map_to_scalp(map_with(std::vector<double>(49, 0.3)), layout);
    REQUIRE(scores.size() == 19);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (!scores[i].covered) continue;
      CHECK(scores[i].score == doctest::Approx(0.3));
      if (i && scores[i - 1].covered) CHECK(scores[i - 1].electrode < scores[i].electrode);
    }
  }

  TEST_CASE("a single hot occluder ranks the electrodes under it first") {
    const auto layout = ElectrodeLayout::standard_1020();
    const double extent = layout.grid_extent();
    const auto t7 = nearest_pixel(layout.projected("T7"), extent);
    auto m = map_with({});
    const int i = std::min(6, t7[0] / 2), j = std::min(6, t7[1] / 2);
    m.drops[static_cast<std::size_t>(i * 7 + j)] = 1.0;
    const auto scores = map_to_scalp(m, layout);
    bool seen_t7 = false;
    for (const auto& s : scores) {
      if (s.score == 0.0) break;
      seen_t7 |= s.electrode == "T7";
    }
    CHECK(seen_t7);
    CHECK(argmax_distance(m, layout.projected("T7"), extent) <= 2.0);
  }

  TEST_CASE("adding a constant leaves the ranking unchanged") {
    Rng rng(9);
    std::vector<double> d(49);
    for (auto& v : d) v = rng.normal();
    auto shifted = d;
    for (auto& v : shifted) v += 0.8;
    const auto layout = ElectrodeLayout::standard_1020();
    const auto a = map_to_scalp(map_with(d), layout);
    const auto b = map_to_scalp(map_with(shifted), layout);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      CHECK(a[k].electrode == b[k].electrode);
      if (a[k].covered) CHECK(b[k].score == doctest::Approx(a[k].score + 0.8));
    }
  }

  TEST_CASE("csv and svg output") {
    auto m = map_with({});
    m.drops[10] = 0.125;
    const auto csv = occlusion_csv(m);
    CHECK(csv.starts_with("row,col,pixel_row,pixel_col,drop\n"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 50);
    CHECK(csv.find("1,3,2,6,0.125000000") != std::string::npos);
    const auto svg = occlusion_svg(m, ElectrodeLayout::standard_1020(), "a < b");
    CHECK(svg.starts_with("<svg"));
    CHECK(svg.find("a &lt; b") != std::string::npos);
    CHECK(svg.find(">CZ<") != std::string::npos);
  }
}
