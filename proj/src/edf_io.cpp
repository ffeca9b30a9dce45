#include "szd/edf_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <regex>
#include <sstream>

#include "szd/error.hpp"

namespace szd {

namespace {

constexpr std::size_t kMainHeaderBytes = 256;
constexpr std::size_t kSignalHeaderBytes = 256;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' ||
                        s.front() == '\r' || s.front() == '\n')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                        s.back() == '\r' || s.back() == '\n' ||
                        s.back() == '\0')) {
    s.remove_suffix(1);
  }
  return s;
}

// Sequential reader over the ASCII header area.
class HeaderCursor {
 public:
  explicit HeaderCursor(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t width, const char* field) {
    if (pos_ + width > bytes_.size()) {
      fail(ErrorKind::kMalformedHeader,
           std::string("header ends inside field '") + field + "'");
    }
    std::string_view out = bytes_.substr(pos_, width);
    for (char c : out) {
      auto u = static_cast<unsigned char>(c);
      if (u < 0x20 || u > 0x7e) {
        fail(ErrorKind::kMalformedHeader,
             std::string("non-ASCII byte in field '") + field + "'");
      }
    }
    pos_ += width;
    return out;
  }

  std::size_t position() const { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

long parse_int_field(std::string_view raw, const char* field) {
  std::string_view s = trim(raw);
  long value = 0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    fail(ErrorKind::kMalformedHeader,
         std::string("field '") + field + "' is not an integer: '" +
             std::string(raw) + "'");
  }
  return value;
}

double parse_real_field(std::string_view raw, const char* field) {
  std::string s(trim(raw));
  if (s.empty()) {
    fail(ErrorKind::kMalformedHeader,
         std::string("field '") + field + "' is empty");
  }
  char* end = nullptr;
  double value = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(value)) {
    fail(ErrorKind::kMalformedHeader,
         std::string("field '") + field + "' is not a number: '" + s + "'");
  }
  return value;
}

std::string pad(std::string_view s, std::size_t width) {
  std::string out(s.substr(0, width));
  out.resize(width, ' ');
  return out;
}

// Shortest representation of `value` that fits in 8 characters, rounded in
// the requested direction so the physical range only ever widens.
std::string format_limit(double value, bool round_up) {
  for (int decimals = 6; decimals >= 0; --decimals) {
    double scale = std::pow(10.0, decimals);
    double rounded = round_up ? std::ceil(value * scale - 1e-9) / scale
                              : std::floor(value * scale + 1e-9) / scale;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, rounded);
    std::string s(buf);
    if (s == "-0" || s.find_first_not_of("-0.") == std::string::npos) {
      s = "0";
    }
    if (s.size() <= 8) return s;
  }
  fail(ErrorKind::kInvalidArgument,
       "physical limit does not fit an EDF header field");
}

}  // namespace

std::size_t Recording::samples_per_channel() const {
  return static_cast<std::size_t>(std::llround(sample_rate_hz * duration_s));
}

const ChannelSignal* Recording::find(std::string_view label) const {
  for (const auto& ch : channels) {
    if (ch.label == label) return &ch;
  }
  return nullptr;
}

double calibrate(int digital, const ChannelSignal& channel) {
  const double gain = (channel.physical_max - channel.physical_min) /
                      static_cast<double>(channel.digital_max - channel.digital_min);
  return (static_cast<double>(digital) - channel.digital_min) * gain +
         channel.physical_min;
}

Recording parse_edf(std::string_view bytes, std::string recording_id) {
  HeaderCursor cur(bytes);
  if (bytes.size() < kMainHeaderBytes) {
    fail(ErrorKind::kMalformedHeader, "stream shorter than the 256-byte header");
  }
  std::string_view version = cur.take(8, "version");
  if (version != "0       ") {
    fail(ErrorKind::kMalformedHeader, "version field must be \"0\"");
  }
  Recording rec;
  rec.patient_id = std::string(trim(cur.take(80, "patient")));
  std::string header_recording(trim(cur.take(80, "recording")));
  std::string start_date(trim(cur.take(8, "startdate")));
  std::string start_time(trim(cur.take(8, "starttime")));
  if (!start_date.empty() || !start_time.empty()) {
    rec.start_time = start_date + " " + start_time;
  }
  const long header_bytes = parse_int_field(cur.take(8, "header bytes"), "header bytes");
  cur.take(44, "reserved");
  const long n_records = parse_int_field(cur.take(8, "data records"), "data records");
  const double record_duration =
      parse_real_field(cur.take(8, "record duration"), "record duration");
  const long ns = parse_int_field(cur.take(4, "signal count"), "signal count");

  if (ns <= 0 || ns > 4096) {
    fail(ErrorKind::kMalformedHeader, "signal count out of range");
  }
  const std::size_t expected_header =
      kMainHeaderBytes + static_cast<std::size_t>(ns) * kSignalHeaderBytes;
  if (header_bytes != static_cast<long>(expected_header)) {
    fail(ErrorKind::kMalformedHeader, "header byte count does not match signal count");
  }
  if (bytes.size() < expected_header) {
    fail(ErrorKind::kMalformedHeader, "stream ends inside the signal headers");
  }
  if (!(record_duration > 0.0)) {
    fail(ErrorKind::kMalformedHeader, "record duration must be positive");
  }

  const auto n = static_cast<std::size_t>(ns);
  auto read_column = [&](std::size_t width, const char* field) {
    std::vector<std::string_view> col(n);
    for (auto& v : col) v = cur.take(width, field);
    return col;
  };
  auto labels = read_column(16, "label");
  read_column(80, "transducer");
  read_column(8, "physical dimension");
  auto phys_min = read_column(8, "physical minimum");
  auto phys_max = read_column(8, "physical maximum");
  auto dig_min = read_column(8, "digital minimum");
  auto dig_max = read_column(8, "digital maximum");
  read_column(80, "prefiltering");
  auto spr = read_column(8, "samples per record");
  read_column(32, "reserved");

  std::vector<long> samples_per_record(n);
  for (std::size_t i = 0; i < n; ++i) {
    samples_per_record[i] = parse_int_field(spr[i], "samples per record");
    if (samples_per_record[i] <= 0) {
      fail(ErrorKind::kMalformedHeader, "samples per record must be positive");
    }
    if (samples_per_record[i] != samples_per_record[0]) {
      fail(ErrorKind::kNonUniformSampleRate,
           "channels do not share one sample rate");
    }
  }
  const auto spr0 = static_cast<std::size_t>(samples_per_record[0]);
  const std::size_t record_bytes = n * spr0 * 2;
  const std::size_t data_bytes = bytes.size() - expected_header;

  std::size_t records = 0;
  if (n_records == -1) {
    records = data_bytes / record_bytes;
  } else if (n_records < 0) {
    fail(ErrorKind::kMalformedHeader, "negative data record count");
  } else {
    records = static_cast<std::size_t>(n_records);
    if (records > data_bytes / record_bytes) {
      fail(ErrorKind::kTruncatedRecords,
           "header declares " + std::to_string(records) + " records, stream holds " +
               std::to_string(data_bytes / record_bytes));
    }
  }

  rec.id = recording_id.empty() ? header_recording : std::move(recording_id);
  rec.sample_rate_hz = static_cast<double>(spr0) / record_duration;
  rec.duration_s = static_cast<double>(records) * record_duration;
  rec.channels.resize(n);
  std::map<std::string, int> seen;
  for (std::size_t i = 0; i < n; ++i) {
    auto& ch = rec.channels[i];
    std::string label(trim(labels[i]));
    int& count = seen[label];
    ch.label = count == 0 ? label : label + "-" + std::to_string(count);
    ++count;
    ch.physical_min = parse_real_field(phys_min[i], "physical minimum");
    ch.physical_max = parse_real_field(phys_max[i], "physical maximum");
    ch.digital_min = static_cast<int>(parse_int_field(dig_min[i], "digital minimum"));
    ch.digital_max = static_cast<int>(parse_int_field(dig_max[i], "digital maximum"));
    if (ch.digital_min == ch.digital_max) {
      fail(ErrorKind::kZeroCalibrationRange,
           "channel '" + ch.label + "' has digital_min == digital_max");
    }
    if (ch.digital_min > ch.digital_max) {
      fail(ErrorKind::kMalformedHeader,
           "channel '" + ch.label + "' has digital_min > digital_max");
    }
    ch.samples.resize(records * spr0);
  }

  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data()) + expected_header;
  for (std::size_t r = 0; r < records; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      auto& ch = rec.channels[c];
      const unsigned char* p = data + (r * n + c) * spr0 * 2;
      double* out = ch.samples.data() + r * spr0;
      for (std::size_t s = 0; s < spr0; ++s) {
        auto raw = static_cast<std::int16_t>(
            static_cast<std::uint16_t>(p[2 * s]) |
            static_cast<std::uint16_t>(p[2 * s + 1]) << 8);
        int digital = std::clamp<int>(raw, ch.digital_min, ch.digital_max);
        out[s] = calibrate(digital, ch);
      }
    }
  }
  return rec;
}

Recording parse_edf(std::span<const std::byte> bytes, std::string recording_id) {
  return parse_edf(std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                    bytes.size()),
                   std::move(recording_id));
}

Recording read_edf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return parse_edf(std::string_view(bytes), recording_key(path.string()));
}

std::string write_edf(const Recording& rec) {
  const std::size_t n = rec.channels.size();
  if (n == 0) fail(ErrorKind::kInvalidArgument, "recording has no channels");
  const double fs = rec.sample_rate_hz;
  const auto spr = static_cast<std::size_t>(std::llround(fs));
  if (std::abs(fs - static_cast<double>(spr)) > 1e-9) {
    fail(ErrorKind::kInvalidArgument, "writer needs an integer sample rate");
  }
  const std::size_t total = rec.samples_per_channel();
  if (total % spr != 0) {
    fail(ErrorKind::kInvalidArgument, "duration must be a whole number of seconds");
  }
  const std::size_t records = total / spr;

  std::string out;
  out.reserve(kMainHeaderBytes + n * kSignalHeaderBytes + records * n * spr * 2);
  std::string date = "01.01.00", time = "00.00.00";
  if (rec.start_time && rec.start_time->size() == 17) {
    date = rec.start_time->substr(0, 8);
    time = rec.start_time->substr(9, 8);
  }
  out += pad("0", 8);
  out += pad(rec.patient_id, 80);
  out += pad(rec.id, 80);
  out += pad(date, 8);
  out += pad(time, 8);
  out += pad(std::to_string(kMainHeaderBytes + n * kSignalHeaderBytes), 8);
  out += pad("", 44);
  out += pad(std::to_string(records), 8);
  out += pad("1", 8);
  out += pad(std::to_string(n), 4);

  struct Scale {
    double pmin, pmax;
  };
  std::vector<Scale> scales(n);
  for (std::size_t c = 0; c < n; ++c) {
    const auto& ch = rec.channels[c];
    if (ch.samples.size() != total) {
      fail(ErrorKind::kInvalidArgument, "channel '" + ch.label + "' has wrong length");
    }
    double lo = ch.physical_min, hi = ch.physical_max;
    for (double v : ch.samples) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi <= lo) hi = lo + 1.0;
    scales[c].pmin = std::stod(format_limit(lo, false));
    scales[c].pmax = std::stod(format_limit(hi, true));
  }
  for (const auto& ch : rec.channels) out += pad(ch.label, 16);
  for (std::size_t c = 0; c < n; ++c) out += pad("", 80);
  for (std::size_t c = 0; c < n; ++c) out += pad("uV", 8);
  for (const auto& s : scales) out += pad(format_limit(s.pmin, false), 8);
  for (const auto& s : scales) out += pad(format_limit(s.pmax, true), 8);
  for (std::size_t c = 0; c < n; ++c) out += pad("-32768", 8);
  for (std::size_t c = 0; c < n; ++c) out += pad("32767", 8);
  for (std::size_t c = 0; c < n; ++c) out += pad("", 80);
  for (std::size_t c = 0; c < n; ++c) out += pad(std::to_string(spr), 8);
  for (std::size_t c = 0; c < n; ++c) out += pad("", 32);

  for (std::size_t r = 0; r < records; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const auto& s = scales[c];
      const double step = (s.pmax - s.pmin) / 65535.0;
      const double* src = rec.channels[c].samples.data() + r * spr;
      for (std::size_t i = 0; i < spr; ++i) {
        long d = std::lround((src[i] - s.pmin) / step) - 32768;
        d = std::clamp<long>(d, -32768, 32767);
        auto u = static_cast<std::uint16_t>(static_cast<std::int16_t>(d));
        out.push_back(static_cast<char>(u & 0xff));
        out.push_back(static_cast<char>(u >> 8));
      }
    }
  }
  return out;
}

void write_edf_file(const Recording& rec, const std::filesystem::path& path) {
  std::string bytes = write_edf(rec);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Recording select_channels(const Recording& rec,
                          const std::function<bool(const ChannelSignal&)>& keep) {
  Recording out;
  out.id = rec.id;
  out.patient_id = rec.patient_id;
  out.sample_rate_hz = rec.sample_rate_hz;
  out.duration_s = rec.duration_s;
  out.start_time = rec.start_time;
  for (const auto& ch : rec.channels) {
    if (keep(ch)) out.channels.push_back(ch);
  }
  return out;
}

namespace {

void validate_annotation(const SeizureAnnotation& a, std::size_t line) {
  if (a.onset_s < 0.0) {
    fail(ErrorKind::kNegativeOnset,
         "line " + std::to_string(line) + ": negative onset");
  }
  if (!(a.offset_s > a.onset_s)) {
    fail(ErrorKind::kOffsetBeforeOnset,
         "line " + std::to_string(line) + ": offset not after onset");
  }
}

double parse_seconds(std::string_view s, std::size_t line) {
  std::string t(trim(s));
  char* end = nullptr;
  double v = t.empty() ? 0.0 : std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || !std::isfinite(v)) {
    fail(ErrorKind::kUnparseableLine,
         "line " + std::to_string(line) + ": '" + t + "' is not a number");
  }
  return v;
}

std::vector<SeizureAnnotation> parse_csv(std::string_view text) {
  std::vector<SeizureAnnotation> out;
  std::size_t line_no = 0;
  bool first_content = true;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    if (first_content && line.starts_with("recording")) {
      first_content = false;
      continue;
    }
    first_content = false;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      auto comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 3 || trim(fields[0]).empty()) {
      fail(ErrorKind::kUnparseableLine,
           "line " + std::to_string(line_no) + ": expected recording,onset_s,offset_s");
    }
    SeizureAnnotation a{recording_key(trim(fields[0])),
                        parse_seconds(fields[1], line_no),
                        parse_seconds(fields[2], line_no)};
    validate_annotation(a, line_no);
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<SeizureAnnotation> parse_summary(std::string_view text) {
  static const std::regex file_re(R"(^\s*File Name:\s*(\S+))");
  static const std::regex start_re(R"(^\s*Seizure\s*\d*\s*Start Time:\s*(\S+)\s*seconds?\s*$)");
  static const std::regex end_re(R"(^\s*Seizure\s*\d*\s*End Time:\s*(\S+)\s*seconds?\s*$)");
  static const std::regex any_seizure_re(R"(^\s*Seizure\s*\d*\s*(Start|End) Time)");
  std::vector<SeizureAnnotation> out;
  std::string current_file;
  std::optional<double> pending_onset;
  std::size_t pending_line = 0;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    std::smatch m;
    if (std::regex_search(raw, m, file_re)) {
      if (pending_onset) {
        fail(ErrorKind::kUnparseableLine,
             "line " + std::to_string(pending_line) + ": seizure start without end");
      }
      current_file = recording_key(m[1].str());
    } else if (std::regex_match(raw, m, start_re)) {
      if (current_file.empty() || pending_onset) {
        fail(ErrorKind::kUnparseableLine,
             "line " + std::to_string(line_no) + ": unexpected seizure start");
      }
      pending_onset = parse_seconds(m[1].str(), line_no);
      pending_line = line_no;
    } else if (std::regex_match(raw, m, end_re)) {
      if (!pending_onset) {
        fail(ErrorKind::kUnparseableLine,
             "line " + std::to_string(line_no) + ": seizure end without start");
      }
      SeizureAnnotation a{current_file, *pending_onset,
                          parse_seconds(m[1].str(), line_no)};
      validate_annotation(a, line_no);
      out.push_back(std::move(a));
      pending_onset.reset();
    } else if (std::regex_search(raw, any_seizure_re)) {
      fail(ErrorKind::kUnparseableLine,
           "line " + std::to_string(line_no) + ": malformed seizure time");
    }
  }
  if (pending_onset) {
    fail(ErrorKind::kUnparseableLine,
         "line " + std::to_string(pending_line) + ": seizure start without end");
  }
  return out;
}

}  // namespace

std::vector<SeizureAnnotation> parse_annotations(std::string_view text,
                                                 AnnotationFormat format) {
  auto out = format == AnnotationFormat::kCsv ? parse_csv(text) : parse_summary(text);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.onset_s < b.onset_s;
  });
  return out;
}

std::string write_annotations_csv(std::span<const SeizureAnnotation> annotations) {
  std::string out = "recording,onset_s,offset_s\n";
  char buf[128];
  for (const auto& a : annotations) {
    std::snprintf(buf, sizeof(buf), ",%.17g,%.17g\n", a.onset_s, a.offset_s);
    out += a.recording;
    out += buf;
  }
  return out;
}

std::string recording_key(std::string_view name) {
  auto slash = name.find_last_of("/\\");
  if (slash != std::string_view::npos) name.remove_prefix(slash + 1);
  if (name.size() > 4) {
    std::string tail(name.substr(name.size() - 4));
    std::transform(tail.begin(), tail.end(), tail.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (tail == ".edf") name.remove_suffix(4);
  }
  return std::string(name);
}

std::vector<SeizureAnnotation> annotations_for(
    std::span<const SeizureAnnotation> all, const Recording& recording) {
  std::vector<SeizureAnnotation> out;
  const std::string key = recording_key(recording.id);
  for (const auto& a : all) {
    if (recording_key(a.recording) != key) continue;
    if (a.offset_s > recording.duration_s + 1e-9) {
      fail(ErrorKind::kAnnotationOutOfRange,
           "seizure in " + key + " ends after the recording");
    }
    out.push_back(a);
  }
  return out;
}

}  // namespace szd
