#include "szd/spectral_montage.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "szd/error.hpp"

namespace szd {

namespace {

// cos/sin tables for bins 1..48 of an N-point DFT.
struct DftTable {
  int n = 0;
  int bins = 0;
  std::vector<double> cos_tab;  // [bin][sample]
  std::vector<double> sin_tab;

  explicit DftTable(int size) : n(size), bins(kBands.back().hi_hz - 1) {
    cos_tab.resize(static_cast<std::size_t>(bins) * n);
    sin_tab.resize(cos_tab.size());
    for (int k = 1; k <= bins; ++k) {
      for (int t = 0; t < n; ++t) {
        // Reduce k*t mod n first so the angle stays exact for large products.
        const double angle = 2.0 * std::numbers::pi *
                             static_cast<double>((static_cast<long>(k) * t) % n) / n;
        cos_tab[static_cast<std::size_t>(k - 1) * n + t] = std::cos(angle);
        sin_tab[static_cast<std::size_t>(k - 1) * n + t] = std::sin(angle);
      }
    }
  }
};

const DftTable& dft_table(int n) {
  thread_local std::unordered_map<int, DftTable> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, DftTable(n)).first;
  return it->second;
}

}  // namespace

std::array<double, kBandCount> band_magnitudes(std::span<const double> block,
                                               double sample_rate_hz) {
  if (sample_rate_hz < 2.0 * kBands.back().hi_hz) {
    fail(ErrorKind::kSampleRateTooLow,
         "sample rate must be at least 98 Hz to resolve the 14-49 Hz band");
  }
  const auto n = static_cast<std::size_t>(std::llround(sample_rate_hz));
  if (block.size() != n) {
    fail(ErrorKind::kWrongBlockLength,
         "block holds " + std::to_string(block.size()) + " samples, expected " +
             std::to_string(n));
  }
  const DftTable& tab = dft_table(static_cast<int>(n));
  std::array<double, kBandCount> out{};
  for (int b = 0; b < kBandCount; ++b) {
    for (int k = std::max(1, kBands[b].lo_hz); k < kBands[b].hi_hz; ++k) {
      const double* c = tab.cos_tab.data() + static_cast<std::size_t>(k - 1) * n;
      const double* s = tab.sin_tab.data() + static_cast<std::size_t>(k - 1) * n;
      double re = 0.0, im = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        re += block[t] * c[t];
        im -= block[t] * s[t];
      }
      out[b] += std::hypot(re, im);
    }
  }
  return out;
}

double distance(Point2 a, Point2 b) { return std::hypot(a.u - b.u, a.v - b.v); }

Point2 polar_project(Vec3 p) {
  const double norm = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
  if (std::abs(norm - 1.0) > 1e-6) {
    fail(ErrorKind::kNotUnitVector, "electrode position is not a unit vector");
  }
  const double theta = std::acos(std::clamp(p.z, -1.0, 1.0));
  const double phi = std::atan2(p.y, p.x);
  return {theta * std::cos(phi), theta * std::sin(phi)};
}

const char* const kStandard1020Table = R"(# Idealized 10-20 scalp positions on the unit sphere.
# x: toward nasion, y: toward left ear, z: toward vertex.
# name x y z
FP1 0.904508497187474 0.293892626146237 0.309016994374947
FP2 0.904508497187474 -0.293892626146237 0.309016994374947
F7 0.559016994374947 0.769420884293813 0.309016994374947
F3 0.645416362854495 0.433027429173862 0.629225686175280
FZ 0.587785252292473 0.000000000000000 0.809016994374947
F4 0.645416362854495 -0.433027429173862 0.629225686175280
F8 0.559016994374947 -0.769420884293813 0.309016994374947
T7 0.000000000000000 0.951056516295154 0.309016994374947
C3 0.000000000000000 0.587785252292473 0.809016994374947
CZ 0.000000000000000 0.000000000000000 1.000000000000000
C4 0.000000000000000 -0.587785252292473 0.809016994374947
T8 0.000000000000000 -0.951056516295154 0.309016994374947
P7 -0.559016994374947 0.769420884293813 0.309016994374947
P3 -0.645416362854494 0.433027429173862 0.629225686175280
PZ -0.587785252292473 0.000000000000000 0.809016994374947
P4 -0.645416362854494 -0.433027429173862 0.629225686175280
P8 -0.559016994374947 -0.769420884293813 0.309016994374947
O1 -0.904508497187474 0.293892626146237 0.309016994374947
O2 -0.904508497187474 -0.293892626146237 0.309016994374947
)";

std::string normalize_electrode_name(std::string_view name) {
  std::string s;
  for (char c : name) {
    if (!std::isspace(static_cast<unsigned char>(c))) {
      s.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
  }
  if (s == "T3") return "T7";
  if (s == "T4") return "T8";
  if (s == "T5") return "P7";
  if (s == "T6") return "P8";
  return s;
}

ElectrodeLayout ElectrodeLayout::parse(std::string_view table) {
  ElectrodeLayout layout;
  std::istringstream in{std::string(table)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::string name;
    if (!(fields >> name)) continue;
    Vec3 p;
    if (!(fields >> p.x >> p.y >> p.z)) {
      fail(ErrorKind::kUnparseableLine,
           "layout line " + std::to_string(line_no) + ": expected `name x y z`");
    }
    layout.add(name, p);
  }
  return layout;
}

const ElectrodeLayout& ElectrodeLayout::standard_1020() {
  static const ElectrodeLayout layout = parse(kStandard1020Table);
  return layout;
}

void ElectrodeLayout::add(const std::string& name, Vec3 position) {
  const double norm = std::sqrt(position.x * position.x + position.y * position.y +
                                position.z * position.z);
  if (std::abs(norm - 1.0) > 1e-6) {
    fail(ErrorKind::kNotUnitVector, "electrode " + name + " is not on the unit sphere");
  }
  position = {position.x / norm, position.y / norm, position.z / norm};
  entries_[normalize_electrode_name(name)] = Entry{position, polar_project(position)};
}

const ElectrodeLayout::Entry* ElectrodeLayout::find(std::string_view name) const {
  auto it = entries_.find(normalize_electrode_name(name));
  return it == entries_.end() ? nullptr : &it->second;
}

Point2 ElectrodeLayout::projected(std::string_view name) const {
  const Entry* e = find(name);
  if (!e) {
    fail(ErrorKind::kUnknownElectrode, "unknown electrode: " + std::string(name));
  }
  return e->projected;
}

std::vector<std::string> ElectrodeLayout::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

double ElectrodeLayout::max_radius() const {
  double r = 0.0;
  for (const auto& [_, e] : entries_) r = std::max(r, std::hypot(e.projected.u, e.projected.v));
  return r;
}

std::vector<std::string> channel_electrodes(std::string_view label) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (true) {
    auto dash = label.find('-', start);
    tokens.emplace_back(label.substr(start, dash - start));
    if (dash == std::string_view::npos) break;
    start = dash + 1;
  }
  auto all_digits = [](const std::string& t) {
    return !t.empty() && std::all_of(t.begin(), t.end(), [](unsigned char c) {
      return std::isdigit(c);
    });
  };
  if (tokens.size() > 1 && all_digits(tokens.back())) tokens.pop_back();
  for (auto& t : tokens) t = normalize_electrode_name(t);
  return tokens;
}

Point2 bipolar_position(const ElectrodeLayout& layout, std::string_view channel_label) {
  const auto tokens = channel_electrodes(channel_label);
  if (tokens.size() > 2 || tokens.empty()) {
    fail(ErrorKind::kUnknownElectrode,
         "cannot read an electrode pair from '" + std::string(channel_label) + "'");
  }
  Point2 sum;
  for (const auto& t : tokens) {
    const auto* e = layout.find(t);
    if (!e) fail(ErrorKind::kUnknownElectrode, "unknown electrode: " + t);
    sum.u += e->projected.u;
    sum.v += e->projected.v;
  }
  const double n = static_cast<double>(tokens.size());
  return {sum.u / n, sum.v / n};
}

bool is_resolvable(const ElectrodeLayout& layout, std::string_view channel_label) {
  const auto tokens = channel_electrodes(channel_label);
  if (tokens.empty() || tokens.size() > 2) return false;
  return std::all_of(tokens.begin(), tokens.end(),
                     [&](const std::string& t) { return layout.find(t) != nullptr; });
}

}  // namespace szd
