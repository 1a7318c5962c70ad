#include "driveby/error.hpp"
#include "driveby/io.hpp"
#include "driveby/pipeline.hpp"

#include <doctest.h>

#include <random>
#include <sstream>

using namespace driveby;
using namespace driveby::pipeline;

namespace {

struct TempDir {
  fs::path root;
  TempDir() {
    std::random_device rd;
    root = fs::temp_directory_path() / ("driveby_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(root);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(root, ec);
  }
  fs::path operator/(const std::string& s) const { return root / s; }
};

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string bytes(const fs::path& p) { return io::read_text(p); }

// Small bundle shared by the command tests.
const fs::path& shared_bundle() {
  static TempDir dir;
  static const fs::path path = [] {
    const auto r = cli({"simulate", "--case", "unsw", "--crossings", "12", "--damaged", "3", "--seed", "5", "--out",
                        (dir / "bundle").string()});
    REQUIRE(r.code == 0);
    return dir / "bundle";
  }();
  return path;
}

}  // namespace

TEST_CASE("number formatting round-trips exactly") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<double>(i % 40) - 20.0);
    CHECK(io::parse_double(io::format_double(v)) == v);
  }
  CHECK_THROWS_AS(io::parse_double("1.5x"), Error);
  CHECK(io::split_csv_line("a,b,,c") == std::vector<std::string>{"a", "b", "", "c"});
  CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("artifact round-trips") {
  TempDir tmp;
  SUBCASE("record") {
    MultiChannelRecord rec;
    rec.label = "r";
    rec.sample_rate = 500.0;
    rec.channels = {{0.1, -0.2, 1e-300}, {3.0, 4.0, 5.0}};
    io::write_record(tmp / "r", rec);
    const auto back = io::read_record(tmp / "r");
    CHECK(back.label == "r");
    CHECK(back.sample_rate == 500.0);
    CHECK(back.channels == rec.channels);
  }
  SUBCASE("spectrum") {
    SingularSpectrum s;
    s.df = 0.01;
    s.freq = {1.0, 1.01, 1.02};
    s.values = {3.0, 2.0, 1.0};
    io::write_spectrum(tmp / "s.csv", s);
    const auto back = io::read_spectrum(tmp / "s.csv");
    CHECK(back.freq == s.freq);
    CHECK(back.values == s.values);
  }
  SUBCASE("sample and sequence") {
    SpectralSample x;
    x.values = {0.0, 0.25, 1.0};
    x.freq = {1.0, 1.01, 1.02};
    x.source_ids = {"a", "b"};
    x.normalized = true;
    io::write_sample(tmp / "x", x, {7, 2});
    const auto back = io::read_sample(tmp / "x");
    CHECK(back.values == x.values);
    CHECK(back.source_ids == x.source_ids);
    CHECK(back.normalized);
    CHECK(back.freq == x.freq);
    auto bare = x;
    bare.freq.clear();
    CHECK_THROWS_AS(io::write_sample(tmp / "bare", bare, {}), Error);

    const auto seq = assemble_sequence({x, x, x}, 2);
    io::write_sequence(tmp / "seq", seq);
    const auto sb = io::read_sequence(tmp / "seq");
    CHECK(sb.flat == seq.flat);
    CHECK(sb.boundaries == seq.boundaries);
    CHECK(sb.truth_change_flat_index() == seq.truth_change_flat_index());
  }
  SUBCASE("model") {
    AaeArchitecture arch;
    arch.input_dim = 7;
    arch.encoder_hidden = {5};
    arch.latent_dim = 2;
    arch.discriminator_hidden = {3};
    const auto m = init_model(arch, 9);
    io::write_json(tmp / "m.json", io::model_to_json(m, 0.125));
    double threshold = 0.0;
    const auto back = io::model_from_json(io::read_json(tmp / "m.json"), &threshold);
    CHECK(threshold == 0.125);
    const std::vector<double> probe{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
    CHECK(reconstruction_error(back, probe) == reconstruction_error(m, probe));

    auto doc = io::model_to_json(m, 0.125);
    doc["decoder"].erase(0);
    try {
      io::model_from_json(doc);
      FAIL("expected SchemaMismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::SchemaMismatch);
    }
  }
  SUBCASE("detections") {
    std::vector<io::LabeledDetection> rows{{"a", {0.5, 0.25, Verdict::Anomalous}}, {"b", {0.1, 0.25, Verdict::Nominal}}};
    io::write_detections(tmp / "d.csv", rows);
    const auto back = io::read_detections(tmp / "d.csv");
    REQUIRE(back.size() == 2);
    CHECK(back[0].sample_id == "a");
    CHECK(back[0].result.verdict == Verdict::Anomalous);
    CHECK(back[1].result.error == 0.1);
  }
}

TEST_CASE("manifest and report documents") {
  RunManifest m;
  m.subcommand = "fdd";
  m.config = {{"band", {1.0, 10.0}}};
  m.seeds = {{"master", 3}};
  m.inputs = {{"/a/bundle.json", "00"}};
  const auto d = m.compute_digest();
  auto moved = m;
  moved.inputs[0].path = "/elsewhere/bundle.json";
  moved.outputs = {{"x.csv", "11"}};
  CHECK(moved.compute_digest() == d);
  auto changed = m;
  changed.seeds["master"] = 4;
  CHECK(changed.compute_digest() != d);
  m.digest = d;
  CHECK(RunManifest::from_json(m.to_json()).compute_digest() == d);

  CaseStudyReport r;
  r.kind = "aae";
  r.label = "unsw";
  r.aae = AaeSummary{0.5, 18, 2, 10, 0};
  auto doc = r.to_json();
  CHECK(CaseStudyReport::from_json(doc).aae->true_negatives == 18);
  doc["schema_version"] = 99;
  CHECK_THROWS_AS(CaseStudyReport::from_json(doc), Error);
}

TEST_CASE("exit codes") {
  TempDir tmp;
  CHECK(cli({}).code == 2);
  CHECK(cli({"simulate", "--config", (tmp / "missing.json").string(), "--out", (tmp / "o").string()}).code == 2);

  io::write_json(tmp / "bad.json", {{"bogus", 1}});
  const auto unknown = cli({"simulate", "--config", (tmp / "bad.json").string(), "--out", (tmp / "o").string()});
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("bogus") != std::string::npos);

  CHECK(cli({"simulate", "--case", "nowhere", "--out", (tmp / "o").string()}).code == 2);
  fs::create_directories(tmp / "empty");
  CHECK(cli({"fdd", "--bundle", (tmp / "empty").string(), "--out", (tmp / "o2").string()}).code == 3);

  const auto few = cli({"simulate", "--crossings", "4", "--damaged", "2", "--out", (tmp / "few").string()});
  REQUIRE(few.code == 0);
  CHECK(cli({"detect-aae", "--bundle", (tmp / "few").string(), "--out", (tmp / "o3").string()}).code == 3);
}

TEST_CASE("simulate is independent of output location and threads") {
  TempDir tmp;
  const auto a = cli({"simulate", "--crossings", "3", "--damaged", "1", "--seed", "9", "--out", (tmp / "a").string()});
  const auto b = cli({"simulate", "--crossings", "3", "--damaged", "1", "--seed", "9", "--threads", "3", "--out",
                      (tmp / "b").string()});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  const auto ma = io::read_json(tmp / "a" / "manifest.json");
  const auto mb = io::read_json(tmp / "b" / "manifest.json");
  CHECK(ma["digest"] == mb["digest"]);
  CHECK(bytes(tmp / "a" / "bundle.json") == bytes(tmp / "b" / "bundle.json"));
  CHECK(bytes(tmp / "a" / "records" / "damaged_000.csv") == bytes(tmp / "b" / "records" / "damaged_000.csv"));

  const auto loaded = load_bundle(tmp / "a");
  CHECK(loaded.records.size() == 4);
  CHECK(loaded.damaged.back());

  SUBCASE("tampering is detected") {
    auto text = bytes(tmp / "a" / "records" / "nominal_001.csv");
    text[text.size() / 2] = text[text.size() / 2] == '1' ? '2' : '1';
    io::write_text(tmp / "a" / "records" / "nominal_001.csv", text);
    try {
      load_bundle(tmp / "a");
      FAIL("expected BundleCorrupt");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::BundleCorrupt);
    }
    CHECK(cli({"fdd", "--bundle", (tmp / "a").string(), "--out", (tmp / "f").string()}).code == 3);
  }
  SUBCASE("missing record") {
    fs::remove(tmp / "b" / "records" / "nominal_000.json");
    CHECK_THROWS_AS(load_bundle(tmp / "b"), Error);
  }
}

TEST_CASE("fdd command") {
  TempDir tmp;
  const auto r = cli({"fdd", "--bundle", shared_bundle().string(), "--out", (tmp / "fdd").string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(tmp / "fdd" / "pooled.csv"));
  CHECK(fs::exists(tmp / "fdd" / "peaks.json"));
  const auto report = CaseStudyReport::from_json(io::read_json(tmp / "fdd" / "report.json"));
  CHECK(report.kind == "fdd");
  CHECK(std::abs(*report.f_b1 - 6.65) <= 0.05);
  CHECK(std::abs(*report.f_vd - 15.0) <= 2.0);
  CHECK(report.manifest_digest == io::read_json(tmp / "fdd" / "manifest.json")["digest"]);
}

TEST_CASE("detect-aae, report and replay") {
  TempDir tmp;
  io::write_json(tmp / "aae.json", {{"epochs", 40}, {"nominal_sets", 20}, {"damaged_sets", 3}});
  const auto r = cli({"detect-aae", "--config", (tmp / "aae.json").string(), "--bundle", shared_bundle().string(),
                      "--seed", "2", "--out", (tmp / "aae").string()});
  REQUIRE(r.code == 0);
  const auto report = CaseStudyReport::from_json(io::read_json(tmp / "aae" / "report.json"));
  REQUIRE(report.aae.has_value());
  CHECK(report.aae->evaluated() == 4 + 3);
  const auto rows = io::read_detections(tmp / "aae" / "detections.csv");
  CHECK(rows.size() == 7);
  for (const auto& row : rows) CHECK((row.result.verdict == Verdict::Anomalous) == (row.result.error > row.result.threshold));

  const auto merged = cli({"report", "--out", (tmp / "rep").string(), (tmp / "aae" / "report.json").string()});
  CHECK(merged.code == 0);
  CHECK(fs::exists(tmp / "rep" / "report.json"));

  const auto replay = cli({"detect-aae", "--config", (tmp / "aae" / "manifest.json").string(), "--out",
                           (tmp / "replay").string()});
  REQUIRE(replay.code == 0);
  CHECK(bytes(tmp / "aae" / "detections.csv") == bytes(tmp / "replay" / "detections.csv"));
  CHECK(bytes(tmp / "aae" / "model.json") == bytes(tmp / "replay" / "model.json"));

  SUBCASE("inconsistent counts are rejected") {
    auto text = bytes(tmp / "aae" / "detections.csv");
    const auto pos = text.find("nominal");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 7, "anomalous");
    io::write_text(tmp / "aae" / "detections.csv", text);
    CHECK(cli({"report", "--out", (tmp / "rep2").string(), (tmp / "aae" / "report.json").string()}).code == 3);
  }
}

TEST_CASE("detect-mp command") {
  TempDir tmp;
  const auto r = cli({"detect-mp", "--bundle", shared_bundle().string(), "--composition", "20+10", "--trials", "2",
                      "--out", (tmp / "mp").string()});
  REQUIRE(r.code == 0);
  const auto report = CaseStudyReport::from_json(io::read_json(tmp / "mp" / "report.json"));
  REQUIRE(report.cac.has_value());
  CHECK(report.cac->trials == 2);
  CHECK(report.cac->min_cac >= 0.0);
  CHECK(report.cac->min_cac <= 1.0);
  const auto seq = io::read_sequence(tmp / "mp" / "sequence_000");
  CHECK(seq.flat.size() == 27000);
  CHECK(seq.truth_change_flat_index() == 18000);

  CHECK(cli({"detect-mp", "--bundle", shared_bundle().string(), "--composition", "twenty", "--out",
             (tmp / "bad").string()})
            .code == 2);
}
