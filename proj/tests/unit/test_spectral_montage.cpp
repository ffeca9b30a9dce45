#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "szd/error.hpp"
#include "szd/random.hpp"
#include "szd/spectral_montage.hpp"

using namespace szd;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> sine(double hz, double amp = 1.0, int n = 256, double phase = 0.0) {
  std::vector<double> x(n);
  for (int t = 0; t < n; ++t) x[t] = amp * std::sin(2 * kPi * hz * t / n + phase);
  return x;
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

TEST_SUITE("spectral_montage") {
  TEST_CASE("bin-aligned 10 Hz sine lands in band 2 with magnitude N/2") {
    const auto b = band_magnitudes(sine(10), 256);
    CHECK(std::abs(b[1] - 128.0) < 1e-9);
    CHECK(b[0] < 1e-6);
    CHECK(b[2] < 1e-6);
  }

  TEST_CASE("each band picks up its own sines") {
    for (int hz = 1; hz < 49; ++hz) {
      const auto b = band_magnitudes(sine(hz, 1.0, 256, 0.3), 256);
      const int band = hz < 7 ? 0 : hz < 14 ? 1 : 2;
      for (int k = 0; k < 3; ++k) {
        if (k == band) CHECK(std::abs(b[k] - 128.0) < 1e-8);
        else CHECK(b[k] < 1e-6);
      }
    }
  }

  TEST_CASE("constant and zero blocks give zeros") {
    const std::vector<double> c(256, 42.0), z(256, 0.0);
    for (double v : band_magnitudes(c, 256)) CHECK(v < 1e-9);
    for (double v : band_magnitudes(z, 256)) CHECK(v == 0.0);
  }

  TEST_CASE("block length and sample rate preconditions") {
    CHECK(kind_of([] { band_magnitudes(std::vector<double>(255), 256); }) == ErrorKind::kWrongBlockLength);
    CHECK(kind_of([] { band_magnitudes(std::vector<double>(64), 64); }) == ErrorKind::kSampleRateTooLow);
    CHECK_NOTHROW(band_magnitudes(std::vector<double>(100), 100));
  }

  TEST_CASE("amplitude linearity and the full-spectrum bound") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> x(256);
      for (auto& v : x) v = rng.normal();
      const double a = rng.uniform(0, 5);
      std::vector<double> ax(x);
      for (auto& v : ax) v *= a;
      const auto b = band_magnitudes(x, 256);
      const auto ab = band_magnitudes(ax, 256);
      for (int k = 0; k < 3; ++k) CHECK(ab[k] == doctest::Approx(a * b[k]).epsilon(1e-9));

      double all = 0.0;
      for (int k = 0; k < 256; ++k) {
        std::complex<double> s = 0.0;
        for (int t = 0; t < 256; ++t) s += x[t] * std::polar(1.0, -2 * kPi * k * t / 256);
        all += std::abs(s);
      }
      CHECK(b[0] + b[1] + b[2] <= all + 1e-9);
    }
  }

  TEST_CASE("projection identities") {
    const Point2 pole = polar_project({0, 0, 1});
    CHECK(pole.u == 0.0);
    CHECK(pole.v == 0.0);
    const Point2 eq = polar_project({1, 0, 0});
    CHECK(std::abs(eq.u - kPi / 2) < 1e-12);
    CHECK(std::abs(eq.v) < 1e-12);
    const double s = std::sqrt(0.5);
    const Point2 a = polar_project({0.5, 0.5, s});
    const Point2 b = polar_project({0.5, -0.5, s});
    CHECK(a.u == doctest::Approx(b.u));
    CHECK(a.v == doctest::Approx(-b.v));
    CHECK(kind_of([] { polar_project({1, 1, 0}); }) == ErrorKind::kNotUnitVector);
  }

  TEST_CASE("radius equals arc distance from the vertex") {
    Rng rng(17);
    std::vector<Point2> seen;
    for (int i = 0; i < 100; ++i) {
      const double theta = rng.uniform(0.01, kPi / 2);
      const double phi = rng.uniform(-kPi, kPi);
      const Vec3 p{std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
      const Point2 q = polar_project(p);
      const double arc = std::acos(std::clamp(p.z, -1.0, 1.0));
      CHECK(std::hypot(q.u, q.v) == doctest::Approx(arc).epsilon(1e-12));
      for (const auto& o : seen) CHECK(distance(o, q) > 1e-9);
      seen.push_back(q);
    }
  }

  TEST_CASE("standard layout") {
    const auto& L = ElectrodeLayout::standard_1020();
    CHECK(L.size() == 19);
    for (const auto& name : L.names()) {
      const auto* e = L.find(name);
      REQUIRE(e != nullptr);
      const auto& p = e->position;
      CHECK(std::abs(std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z) - 1.0) < 1e-9);
      CHECK(std::isfinite(e->projected.u));
    }
    const std::pair<const char*, const char*> mirrors[] = {
        {"FP1", "FP2"}, {"F7", "F8"}, {"F3", "F4"}, {"T7", "T8"}, {"C3", "C4"},
        {"P7", "P8"},   {"P3", "P4"}, {"O1", "O2"}};
    for (auto [l, r] : mirrors) {
      const Point2 a = L.projected(l), b = L.projected(r);
      CHECK(a.u == doctest::Approx(b.u));
      CHECK(a.v == doctest::Approx(-b.v));
    }
    CHECK(L.grid_extent() == doctest::Approx(1.1 * L.max_radius()));
  }

  TEST_CASE("names and synonyms") {
    CHECK(normalize_electrode_name("t3") == "T7");
    CHECK(normalize_electrode_name("T6") == "P8");
    CHECK(channel_electrodes("FP1-F7") == std::vector<std::string>{"FP1", "F7"});
    CHECK(channel_electrodes("T8-P8-1") == std::vector<std::string>{"T8", "P8"});
    CHECK(channel_electrodes("cz") == std::vector<std::string>{"CZ"});
  }

  TEST_CASE("bipolar positions") {
    const auto& L = ElectrodeLayout::standard_1020();
    const Point2 cz = bipolar_position(L, "CZ");
    CHECK(std::abs(cz.u) < 1e-12);
    CHECK(std::abs(cz.v) < 1e-12);
    const Point2 fp1 = L.projected("FP1"), f7 = L.projected("F7");
    const Point2 mid = bipolar_position(L, "FP1-F7");
    CHECK(mid.u == doctest::Approx((fp1.u + f7.u) / 2));
    CHECK(mid.v == doctest::Approx((fp1.v + f7.v) / 2));
    try {
      bipolar_position(L, "FP1-XX9");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kUnknownElectrode);
      CHECK(std::string(e.what()).find("XX9") != std::string::npos);
    }
    CHECK(is_resolvable(L, "T3-T5"));
    CHECK_FALSE(is_resolvable(L, "ECG"));
  }

  TEST_CASE("custom layout table") {
    const auto L = ElectrodeLayout::parse("# name x y z\nA 0 0 1\nB 1 0 0\n");
    CHECK(L.size() == 2);
    CHECK(L.projected("B").u == doctest::Approx(kPi / 2));
    CHECK(kind_of([] { ElectrodeLayout::parse("A 1 1 1\n"); }) == ErrorKind::kNotUnitVector);
  }
}
