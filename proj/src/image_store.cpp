#include "szd/image_store.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "szd/error.hpp"
#include "szd/io_util.hpp"

namespace szd {

namespace {

constexpr char kMagic[4] = {'S', 'Z', 'I', 'M'};
constexpr std::uint32_t kVersion = 1;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

double to_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::kUnparseableLine, where + ": bad number '" + s + "'");
  }
}

}  // namespace

void write_recording_images(const RecordingImages& rec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string bin(kMagic, 4);
  put_u32(bin, kVersion);
  put_u32(bin, static_cast<std::uint32_t>(rec.sequences.size()));
  for (const auto& s : rec.sequences) {
    if (s.data.size() != static_cast<std::size_t>(kSequenceSize)) {
      fail(ErrorKind::kWrongSequenceLength, "image sequence has the wrong size");
    }
    put_f64(bin, s.start_s);
    put_f64(bin, s.grid_extent);
    bin.push_back(static_cast<char>(s.label));
    bin.push_back(static_cast<char>(s.straddles_boundary ? 1 : 0));
    for (float v : s.data) put_f32(bin, v);
  }
  write_file(dir / (rec.recording_ref + ".szi"), bin);

  std::ostringstream m;
  m << "recording = " << rec.recording_ref << "\n"
    << "patient = " << rec.patient_id << "\n"
    << "duration_s = " << fmt(rec.duration_s) << "\n"
    << "stride_s = " << fmt(rec.stride_s) << "\n"
    << "sequences = " << rec.sequences.size() << "\n"
    << "shape = " << kSubWindows << "x" << kBandCount << "x" << kGridSize << "x" << kGridSize << "\n";
  m << "channels = ";
  for (std::size_t i = 0; i < rec.channels.size(); ++i) m << (i ? "," : "") << rec.channels[i];
  m << "\n";
  for (const auto& a : rec.annotations) {
    m << "seizure = " << fmt(a.onset_s) << ", " << fmt(a.offset_s) << "\n";
  }
  write_file(dir / (rec.recording_ref + ".txt"), m.str());
}

RecordingImages read_recording_images(const std::filesystem::path& dir, const std::string& ref) {
  RecordingImages rec;
  const auto manifest = read_file(dir / (ref + ".txt"));
  std::istringstream in(manifest);
  std::string line;
  std::size_t declared = 0;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto eq = body.find('=');
    const std::string where = ref + ".txt line " + std::to_string(line_no);
    if (eq == std::string::npos) fail(ErrorKind::kUnparseableLine, where + ": expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key == "recording") rec.recording_ref = value;
    else if (key == "patient") rec.patient_id = value;
    else if (key == "duration_s") rec.duration_s = to_double(value, where);
    else if (key == "stride_s") rec.stride_s = to_double(value, where);
    else if (key == "sequences") declared = static_cast<std::size_t>(to_double(value, where));
    else if (key == "channels") rec.channels = value.empty() ? std::vector<std::string>{} : split(value, ',');
    else if (key == "seizure") {
      const auto parts = split(value, ',');
      if (parts.size() != 2) fail(ErrorKind::kUnparseableLine, where + ": seizure needs onset, offset");
      rec.annotations.push_back({rec.recording_ref.empty() ? ref : rec.recording_ref,
                                 to_double(parts[0], where), to_double(parts[1], where)});
    }
  }
  if (rec.recording_ref.empty()) rec.recording_ref = ref;

  const auto bin = read_file(dir / (ref + ".szi"));
  ByteReader r(bin, ErrorKind::kTruncatedRecords);
  if (r.raw(4) != std::string_view(kMagic, 4)) {
    fail(ErrorKind::kBadMagic, ref + ".szi is not an image store file");
  }
  if (r.u32() != kVersion) fail(ErrorKind::kVersionUnsupported, ref + ".szi: unsupported version");
  const std::uint32_t n = r.u32();
  if (n != declared) fail(ErrorKind::kShapeMismatchOnLoad, ref + ": manifest and data disagree on sequence count");
  rec.sequences.resize(n);
  for (auto& s : rec.sequences) {
    s.start_s = r.f64();
    s.grid_extent = r.f64();
    const auto flags = r.raw(2);
    if (flags[0] != 0 && flags[0] != 1) fail(ErrorKind::kShapeMismatchOnLoad, ref + ".szi: bad label");
    s.label = static_cast<Label>(flags[0]);
    s.straddles_boundary = flags[1] != 0;
    s.patient_id = rec.patient_id;
    s.recording_ref = rec.recording_ref;
    s.data.resize(kSequenceSize);
    for (auto& v : s.data) v = r.f32();
  }
  return rec;
}

std::vector<std::string> list_image_store(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorKind::kIo, "not a directory: " + dir.string());
  std::vector<std::string> refs;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".szi") refs.push_back(e.path().stem().string());
  }
  std::sort(refs.begin(), refs.end());
  return refs;
}

std::vector<RecordingImages> read_image_store(const std::filesystem::path& dir) {
  std::vector<RecordingImages> out;
  for (const auto& ref : list_image_store(dir)) out.push_back(read_recording_images(dir, ref));
  return out;
}

void write_normalizer(const Normalizer& n, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "mean = " << fmt(n.mean[0]) << ", " << fmt(n.mean[1]) << ", " << fmt(n.mean[2]) << "\n"
     << "stddev = " << fmt(n.stddev[0]) << ", " << fmt(n.stddev[1]) << ", " << fmt(n.stddev[2]) << "\n";
  write_file(path, os.str());
}

Normalizer read_normalizer(const std::filesystem::path& path) {
  Normalizer n;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = trim(line.substr(0, eq));
    const auto parts = split(trim(line.substr(eq + 1)), ',');
    if (parts.size() != kBandCount) fail(ErrorKind::kUnparseableLine, "normalizer: expected 3 values");
    auto& dst = key == "mean" ? n.mean : n.stddev;
    for (int b = 0; b < kBandCount; ++b) dst[b] = to_double(parts[b], path.string());
  }
  return n;
}

}  // namespace szd
