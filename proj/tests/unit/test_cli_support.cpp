#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "szd/error.hpp"
#include "szd/image_store.hpp"
#include "szd/io_util.hpp"
#include "szd/pipeline.hpp"
#include "szd/random.hpp"
#include "szd/svg.hpp"

using namespace szd;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kMalformedHeader;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

RecordingImages sample_images() {
  RecordingImages r;
  r.recording_ref = "syn01_02";
  r.patient_id = "syn01";
  r.duration_s = 90;
  r.stride_s = 30;
  r.channels = {"FP1-F7", "F7-T7"};
  r.annotations = {{"syn01_02", 40, 70}};
  Rng rng(4);
  for (int i = 0; i < 3; ++i) {
    ImageSequence s;
    s.data.resize(kSequenceSize);
    for (auto& v : s.data) v = static_cast<float>(rng.normal());
    s.start_s = 30.0 * i;
    s.grid_extent = 1.7;
    s.patient_id = r.patient_id;
    s.recording_ref = r.recording_ref;
    s.label = i >= 1 ? Label::kSeizure : Label::kNonSeizure;
    s.straddles_boundary = i >= 1;
    r.sequences.push_back(std::move(s));
  }
  return r;
}

}  // namespace

TEST_SUITE("cli_support") {
  TEST_CASE("image store round trip") {
    TempDir dir("szd_unit_store");
    const auto rec = sample_images();
    write_recording_images(rec, dir.path);
    const auto back = read_recording_images(dir.path, rec.recording_ref);
    CHECK(back.recording_ref == rec.recording_ref);
    CHECK(back.patient_id == rec.patient_id);
    CHECK(back.duration_s == rec.duration_s);
    CHECK(back.channels == rec.channels);
    REQUIRE(back.annotations.size() == 1);
    CHECK(back.annotations[0].offset_s == 70);
    REQUIRE(back.sequences.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(back.sequences[i].data == rec.sequences[i].data);
      CHECK(back.sequences[i].label == rec.sequences[i].label);
      CHECK(back.sequences[i].start_s == rec.sequences[i].start_s);
    }
    auto other = rec;
    other.recording_ref = "syn01_01";
    write_recording_images(other, dir.path);
    CHECK(list_image_store(dir.path) == std::vector<std::string>{"syn01_01", "syn01_02"});
    CHECK(read_image_store(dir.path).size() == 2);
    CHECK(kind_of([&] { read_recording_images(dir.path, "missing"); }) == ErrorKind::kIo);
  }

  TEST_CASE("normalizer file") {
    TempDir dir("szd_unit_norm");
    Normalizer n;
    n.mean = {0.1, -2.5, 1e6};
    n.stddev = {3.0, 1.0 / 3.0, 7.25};
    write_normalizer(n, dir.path / "norm.txt");
    const auto back = read_normalizer(dir.path / "norm.txt");
    CHECK(back.mean == n.mean);
    CHECK(back.stddev == n.stddev);
  }

  TEST_CASE("patient from recording key") {
    CHECK(patient_for("chb01_03", "") == "chb01");
    CHECK(patient_for("syn02_01", "X") == "syn02");
    CHECK(patient_for("record", "hdr") == "hdr");
    CHECK(patient_for("record", "") == "record");
  }

  TEST_CASE("annotation discovery") {
    TempDir dir("szd_unit_ann");
    CHECK(load_annotations(dir.path).empty());
    write_text(dir.path / "chb01-summary.txt",
               "File Name: chb01_03.edf\nNumber of Seizures in File: 1\n"
               "Seizure Start Time: 2996 seconds\nSeizure End Time: 3036 seconds\n");
    auto a = load_annotations(dir.path);
    REQUIRE(a.size() == 1);
    CHECK(a[0].onset_s == 2996);
    write_text(dir.path / "annotations.csv", "recording,onset_s,offset_s\nx_01,1,2\nx_01,5,9\n");
    a = load_annotations(dir.path);
    CHECK(a.size() == 2);
    CHECK(list_edf(dir.path).empty());
    write_text(dir.path / "b.EDF", "");
    write_text(dir.path / "a.edf", "");
    const auto edfs = list_edf(dir.path);
    REQUIRE(edfs.size() == 2);
    CHECK(edfs[0].filename() == "a.edf");
    CHECK(kind_of([] { list_edf("/nonexistent/szd"); }) == ErrorKind::kIo);
  }

  TEST_CASE("svg helpers") {
    CHECK(svg::num(1.0) == "1");
    CHECK(svg::num(0.1234) == "0.123");
    CHECK(svg::num(-0.0001) == "0");
    CHECK(svg::num(2.5) == "2.5");
    CHECK(svg::escape("a<b & \"c\">") == "a&lt;b &amp; &quot;c&quot;&gt;");
    CHECK(svg::diverging(1.0) == "#ff0000");
    CHECK(svg::diverging(-1.0) == "#0000ff");
    CHECK(svg::diverging(0.0) == "#ffffff");
    svg::BarSeries s;
    s.title = "k";
    s.labels = {"0", "1"};
    s.values = {0.5, 1.0};
    const auto chart = svg::bar_chart(s);
    CHECK(chart.starts_with("<svg"));
    CHECK(chart == svg::bar_chart(s));
  }

  TEST_CASE("exit code table") {
    CHECK(exit_code(ErrorKind::kInvalidArgument) == 2);
    CHECK(exit_code(ErrorKind::kMalformedHeader) == 3);
    CHECK(exit_code(ErrorKind::kBadMagic) == 3);
    CHECK(exit_code(ErrorKind::kNoPositives) == 4);
    CHECK(exit_code(ErrorKind::kDataLeak) == 5);
    CHECK(exit_code(ErrorKind::kIo) == 6);
    CHECK(std::string(to_string(ErrorKind::kDataLeak)).size() > 0);
  }
}
