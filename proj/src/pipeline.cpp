#include "driveby/pipeline.hpp"

#include "driveby/aae.hpp"
#include "driveby/error.hpp"
#include "driveby/matrix_profile.hpp"
#include "driveby/parallel.hpp"
#include "driveby/preprocess.hpp"
#include "driveby/rng.hpp"
#include "driveby/spectral.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>

namespace driveby::pipeline {

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorKind::ConfigInvalid, what); }

// Effective configuration of one subcommand: defaults, then the config file,
// then command-line flags. Keys outside the defaults are rejected by name.
class Settings {
 public:
  explicit Settings(Json defaults) : doc_(std::move(defaults)) {}

  void overlay(const Json& cfg) {
    if (!cfg.is_object()) config_error("config must be a JSON object");
    for (const auto& [key, value] : cfg.items()) {
      if (!doc_.contains(key)) config_error("unknown config key '" + key + "'");
      doc_[key] = value;
    }
  }

  void set(const std::string& key, Json value) { doc_[key] = std::move(value); }
  bool is_null(const std::string& key) const { return doc_.at(key).is_null(); }

  template <class T>
  T get(const std::string& key) const {
    const auto& v = doc_.at(key);
    if (v.is_null()) config_error("config key '" + key + "' is required");
    try {
      return v.get<T>();
    } catch (const Json::exception&) {
      config_error("config key '" + key + "' has the wrong type");
    }
  }

  double positive(const std::string& key) const {
    const auto v = get<double>(key);
    if (!(v > 0.0) || !std::isfinite(v)) config_error("config key '" + key + "' must be positive");
    return v;
  }

  std::pair<double, double> band(const std::string& key) const {
    const auto v = get<std::vector<double>>(key);
    if (v.size() != 2 || !(v[0] < v[1])) config_error("config key '" + key + "' must be [low, high] with low < high");
    return {v[0], v[1]};
  }

  const Json& doc() const { return doc_; }

 private:
  Json doc_;
};

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::size_t threads = 1;
};

// Loads a config file or a RunManifest; a manifest contributes its config snapshot.
Json load_config(const std::string& path, const std::string& subcommand) {
  if (path.empty()) return Json::object();
  if (!fs::exists(path)) config_error("config file not found: " + path);
  Json doc;
  try {
    doc = Json::parse(io::read_text(path));
  } catch (const Json::parse_error& e) {
    config_error("config file " + path + " is not valid JSON: " + e.what());
  }
  if (doc.is_object() && doc.contains("schema_version") && doc.contains("subcommand") && doc.contains("config")) {
    if (doc.at("subcommand") != subcommand) {
      config_error("manifest was produced by '" + doc.at("subcommand").get<std::string>() + "', not '" + subcommand + "'");
    }
    return doc.at("config");
  }
  return doc;
}

// Tracks files written below the output directory.
class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  fs::path path(const std::string& rel) {
    if (std::find(files_.begin(), files_.end(), rel) == files_.end()) files_.push_back(rel);
    return root_ / rel;
  }
  const fs::path& root() const { return root_; }

  std::vector<FileDigest> digests() const {
    std::vector<FileDigest> out;
    for (const auto& f : files_) out.push_back({f, io::sha256_file(root_ / f)});
    return out;
  }

 private:
  fs::path root_;
  std::vector<std::string> files_;
};

void finish(RunManifest& manifest, const OutputDir& out) {
  manifest.outputs = out.digests();
  io::write_json(out.root() / "manifest.json", manifest.to_json());
}

Json peak_json(const PeakReport& p) {
  Json secondary = Json::array();
  for (const auto& s : p.secondary_peaks) secondary.push_back({{"freq_hz", s.freq}, {"value", s.value}});
  return Json{{"peak_freq_hz", p.peak_freq},
              {"peak_value", p.peak_value},
              {"peak_prominence", p.peak_prominence},
              {"search_band", {p.search_band.first, p.search_band.second}},
              {"secondary_peaks", std::move(secondary)}};
}

Json beam_json(const BeamModel& b) {
  Json masses = Json::array();
  for (const auto& m : b.added_masses) masses.push_back({{"position", m.position}, {"mass", m.mass}});
  return Json{{"length", b.length},
              {"flexural_rigidity", b.flexural_rigidity},
              {"mass_per_length", b.mass_per_length},
              {"damping_ratios", b.damping_ratios},
              {"n_modes", b.n_modes},
              {"added_masses", std::move(masses)}};
}

Json vehicle_json(const VehicleModel& v) {
  return Json{{"total_mass", v.total_mass},
              {"axle_spacing", v.axle_spacing},
              {"sprung_mass", v.sprung_mass},
              {"spring_stiffness", v.spring_stiffness},
              {"damper_coefficient", v.damper_coefficient},
              {"speed", v.speed},
              {"harmonic_frequency", v.harmonic.frequency},
              {"harmonic_amplitude", v.harmonic.amplitude}};
}

std::uint64_t resolve_seed(Settings& s, const GlobalOptions& g) {
  if (g.seed) s.set("seed", *g.seed);
  return s.get<std::uint64_t>("seed");
}

RunManifest start_manifest(const std::string& sub, const std::vector<std::string>& args, const Settings& s) {
  RunManifest m;
  m.subcommand = sub;
  m.command = args;
  m.config = s.doc();
  return m;
}

// Per-record first singular values cropped to the model band.
std::vector<SingularSpectrum> cropped_spectra(const std::vector<MultiChannelRecord>& records, std::size_t threads) {
  std::vector<SingularSpectrum> out(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    out[i] = band_crop(pooled_singular_spectrum(std::span(&records[i], 1)), kCropLow, kCropHigh);
  });
  return out;
}

std::vector<SpectralSample> normalized(const std::vector<AveragedSet>& sets, const std::vector<std::string>& labels) {
  std::vector<SpectralSample> out;
  out.reserve(sets.size());
  for (const auto& s : sets) {
    auto sample = minmax_normalize(s.spectrum);
    for (auto m : s.members) sample.source_ids.push_back(labels[m]);
    out.push_back(std::move(sample));
  }
  return out;
}

struct SplitBundle {
  std::vector<SingularSpectrum> nominal, damaged;
  std::vector<std::string> nominal_labels, damaged_labels;
};

SplitBundle split_spectra(const LoadedBundle& b, std::size_t threads) {
  auto spectra = cropped_spectra(b.records, threads);
  SplitBundle out;
  for (std::size_t i = 0; i < spectra.size(); ++i) {
    if (b.damaged[i]) {
      out.damaged.push_back(std::move(spectra[i]));
      out.damaged_labels.push_back(b.records[i].label);
    } else {
      out.nominal.push_back(std::move(spectra[i]));
      out.nominal_labels.push_back(b.records[i].label);
    }
  }
  return out;
}

// ---- simulate ----

int cmd_simulate(const GlobalOptions& g, const std::vector<std::string>& args, const Json& flags, std::ostream& out) {
  Settings s(Json{{"case", "unsw"},
                  {"scenario", "indirect"},
                  {"crossings", nullptr},
                  {"damaged_crossings", nullptr},
                  {"seed", 1},
                  {"sample_rate", 500.0},
                  {"record_duration", 15.0},
                  {"settle_time", 5.0},
                  {"sensor_noise_rms", 0.01},
                  {"span", nullptr},
                  {"f1", nullptr},
                  {"mass_per_length", 400.0},
                  {"damping_ratio", 0.005},
                  {"n_modes", 4},
                  {"speed", 0.17},
                  {"harmonic_frequency", 15.0},
                  {"harmonic_amplitude", 1.0},
                  {"roughness_rms", 1e-4},
                  {"pedestrian_rms", 50.0},
                  {"walkers", 2},
                  {"added_people", 5},
                  {"person_mass", 75.0}});
  s.overlay(load_config(g.config_path, "simulate"));
  s.overlay(flags);
  const auto seed = resolve_seed(s, g);

  const CaseStudy cs = case_from_string(s.get<std::string>("case"));
  ScenarioConfig cfg;
  try {
    cfg.scenario = scenario_from_string(s.get<std::string>("scenario"));
  } catch (const Error& e) {
    config_error(std::string("config key 'scenario': ") + e.what());
  }
  if (s.is_null("crossings")) {
    s.set("crossings", cfg.scenario == Scenario::Direct        ? std::size_t{30}
                       : cfg.scenario == Scenario::Indirect    ? case_nominal_crossings(cs)
                                                               : std::size_t{5});
  }
  if (s.is_null("damaged_crossings")) {
    s.set("damaged_crossings", cs == CaseStudy::Unsw && cfg.scenario == Scenario::Indirect ? 10 : 0);
  }
  const BeamModel preset = case_beam(cs);
  if (s.is_null("span")) s.set("span", preset.length);
  if (s.is_null("f1")) s.set("f1", cs == CaseStudy::Unsw ? 6.65 : 6.7);

  cfg.crossings = s.get<std::size_t>("crossings");
  cfg.damaged_crossings = s.get<std::size_t>("damaged_crossings");
  cfg.seed = seed;
  cfg.sample_rate = s.positive("sample_rate");
  cfg.record_duration = s.positive("record_duration");
  cfg.settle_time = s.get<double>("settle_time");
  cfg.sensor_noise_rms = s.get<double>("sensor_noise_rms");
  cfg.roughness.rms = s.get<double>("roughness_rms");
  cfg.pedestrians.rms = s.get<double>("pedestrian_rms");
  cfg.pedestrians.walkers = s.get<std::size_t>("walkers");
  if (cfg.crossings == 0) config_error("config key 'crossings' must be at least 1");

  BeamModel beam = BeamModel::tuned(s.positive("span"), s.positive("f1"), s.positive("mass_per_length"));
  beam.damping_ratios = {s.get<double>("damping_ratio")};
  beam.n_modes = s.get<std::size_t>("n_modes");
  VehicleModel vehicle;
  vehicle.speed = s.positive("speed");
  vehicle.harmonic.frequency = s.positive("harmonic_frequency");
  vehicle.harmonic.amplitude = s.get<double>("harmonic_amplitude");
  try {
    cfg.validate();
    beam.validate();
    vehicle.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }

  std::optional<BeamModel> damaged;
  if (cfg.damaged_crossings > 0) {
    damaged = with_midspan_people(beam, s.get<std::size_t>("added_people"), s.get<double>("person_mass"));
  }

  RunManifest manifest = start_manifest("simulate", args, s);
  manifest.seeds = {{"master", seed}, {"damaged_stream_offset", kDamagedSeedStream}};
  manifest.digest = manifest.compute_digest();

  const auto bundle = generate_dataset(beam, vehicle, cfg, damaged, g.threads);
  OutputDir dir(g.out);
  write_bundle(dir.root(), bundle, to_string(cs), manifest.digest);
  for (const auto& r : bundle.records) {
    dir.path("records/" + r.label + ".csv");
    dir.path("records/" + r.label + ".json");
  }
  dir.path("bundle.json");
  finish(manifest, dir);
  out << Json{{"bundle", dir.root().string()},
              {"records", bundle.records.size()},
              {"nominal_frequencies", bundle.nominal_frequencies},
              {"manifest_digest", manifest.digest}}
             .dump(2)
      << "\n";
  return 0;
}

// ---- fdd ----

int cmd_fdd(const GlobalOptions& g, const std::vector<std::string>& args, const Json& flags, std::ostream& out) {
  Settings s(Json{{"bundle", nullptr},
                  {"mode", nullptr},
                  {"band", {kCropLow, kCropHigh}},
                  {"motor_band", {kMotorBand.first, kMotorBand.second}},
                  {"min_prominence", 0.0},
                  {"motor_min_prominence", kMotorMinProminence},
                  {"records", 0},
                  {"include_damaged", false},
                  {"seg_len", 0},
                  {"overlap", 0.5},
                  {"target_df", kDefaultTargetDf}});
  s.overlay(load_config(g.config_path, "fdd"));
  s.overlay(flags);
  const fs::path bundle_dir = s.get<std::string>("bundle");
  const auto bundle = load_bundle(bundle_dir);
  if (s.is_null("mode")) s.set("mode", bundle.meta.at("scenario") == "direct" ? "direct" : "indirect");
  const auto mode = s.get<std::string>("mode");
  if (mode != "direct" && mode != "indirect") config_error("config key 'mode' must be direct or indirect");
  const auto band = s.band("band");
  const auto motor_band = s.band("motor_band");
  WelchOptions welch{s.get<std::size_t>("seg_len"), s.get<double>("overlap"), s.positive("target_df")};

  std::vector<MultiChannelRecord> used;
  const auto limit = s.get<std::size_t>("records");
  const bool include_damaged = s.get<bool>("include_damaged");
  for (std::size_t i = 0; i < bundle.records.size(); ++i) {
    if (bundle.damaged[i] && !include_damaged) continue;
    if (limit > 0 && used.size() >= limit) break;
    used.push_back(bundle.records[i]);
  }
  if (used.empty()) throw Error(ErrorKind::BundleCorrupt, "bundle has no records to analyse");

  RunManifest manifest = start_manifest("fdd", args, s);
  manifest.inputs = {{(bundle_dir / "bundle.json").string(), io::sha256_file(bundle_dir / "bundle.json")}};
  manifest.digest = manifest.compute_digest();

  OutputDir dir(g.out);
  std::vector<CpsdStack> stacks(used.size());
  std::vector<SingularSpectrum> spectra(used.size());
  parallel_for(used.size(), g.threads, [&](std::size_t i) {
    stacks[i] = compute_cpsd(used[i], welch);
    spectra[i] = svd_sweep(stacks[i]);
  });
  for (std::size_t i = 0; i < used.size(); ++i) io::write_spectrum(dir.path("spectra/" + used[i].label + ".csv"), spectra[i]);
  const auto pooled = svd_sweep(pool_cpsd(stacks));
  stacks.clear();
  io::write_spectrum(dir.path("pooled.csv"), pooled);

  const auto bridge = pick_peak(pooled, band, s.get<double>("min_prominence"));
  Json peaks{{"mode", mode}, {"bridge", peak_json(bridge)}};
  CaseStudyReport report;
  report.kind = "fdd";
  report.label = bundle.meta.value("case", std::string("bundle")) + "_" + mode;
  report.f_b1 = bridge.peak_freq;
  if (mode == "indirect") {
    const auto motor = pick_peak(pooled, motor_band, s.get<double>("motor_min_prominence"));
    peaks["motor"] = peak_json(motor);
    report.f_vd = motor.peak_freq;
  }
  Json labels = Json::array();
  for (const auto& r : used) labels.push_back(r.label);
  peaks["records"] = std::move(labels);
  peaks["manifest_digest"] = manifest.digest;
  io::write_json(dir.path("peaks.json"), peaks);

  report.artifacts = {{"pooled_spectrum", "pooled.csv"}, {"peaks", "peaks.json"}};
  report.manifest_digest = manifest.digest;
  io::write_json(dir.path("report.json"), report.to_json());
  finish(manifest, dir);
  out << peaks.dump(2) << "\n";
  return 0;
}

// ---- detect-aae ----

int cmd_detect_aae(const GlobalOptions& g, const std::vector<std::string>& args, const Json& flags, std::ostream& out) {
  Settings s(Json{{"bundle", nullptr},
                  {"seed", 1},
                  {"set_size", 3},
                  {"nominal_sets", 100},
                  {"damaged_sets", 10},
                  {"split_ratio", 0.8},
                  {"epochs", 2000},
                  {"batch_size", 8},
                  {"learning_rate", 1e-3},
                  {"threshold_percentile", 90.0},
                  {"calibration_fraction", 0.2},
                  {"latent_dim", 8}});
  s.overlay(load_config(g.config_path, "detect-aae"));
  s.overlay(flags);
  const auto seed = resolve_seed(s, g);
  const fs::path bundle_dir = s.get<std::string>("bundle");

  TrainConfig tc;
  tc.epochs = s.get<std::size_t>("epochs");
  tc.batch_size = s.get<std::size_t>("batch_size");
  tc.learning_rate = s.positive("learning_rate");
  tc.split_ratio = s.get<double>("split_ratio");
  tc.threshold_percentile = s.get<double>("threshold_percentile");
  tc.calibration_fraction = s.get<double>("calibration_fraction");
  tc.seed = derive_seed(seed, 3);
  try {
    tc.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }
  const auto set_size = s.get<std::size_t>("set_size");
  const auto nominal_sets = s.get<std::size_t>("nominal_sets");
  const auto damaged_sets = s.get<std::size_t>("damaged_sets");

  const auto bundle = load_bundle(bundle_dir);
  const auto nominal_count = static_cast<std::size_t>(std::count(bundle.damaged.begin(), bundle.damaged.end(), false));
  if (nominal_count < kMinTrainingSamples) {
    throw Error(ErrorKind::TooFewSamples, "bundle has " + std::to_string(nominal_count) + " nominal crossings, need at least " +
                                              std::to_string(kMinTrainingSamples));
  }

  RunManifest manifest = start_manifest("detect-aae", args, s);
  manifest.inputs = {{(bundle_dir / "bundle.json").string(), io::sha256_file(bundle_dir / "bundle.json")}};
  const auto nominal_seed = derive_seed(seed, 1), damaged_seed = derive_seed(seed, 2), init_seed = derive_seed(seed, 4);
  manifest.seeds = {{"master", seed},
                    {"nominal_sets", nominal_seed},
                    {"damaged_sets", damaged_seed},
                    {"initialization", init_seed},
                    {"training", tc.seed}};
  manifest.digest = manifest.compute_digest();

  const auto split = split_spectra(bundle, g.threads);
  const auto nominal = normalized(average_random_sets(split.nominal, set_size, nominal_sets, nominal_seed), split.nominal_labels);
  const auto n_train = static_cast<std::size_t>(std::floor(tc.split_ratio * static_cast<double>(nominal.size())));
  if (n_train < kMinTrainingSamples || n_train >= nominal.size()) {
    throw Error(ErrorKind::TooFewSamples, "split leaves " + std::to_string(n_train) + " training samples out of " +
                                              std::to_string(nominal.size()));
  }
  const std::vector<SpectralSample> train_set(nominal.begin(), nominal.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<SpectralSample> test_set(nominal.begin() + static_cast<std::ptrdiff_t>(n_train), nominal.end());

  AaeArchitecture arch;
  arch.latent_dim = s.get<std::size_t>("latent_dim");
  const auto result = train(init_model(arch, init_seed), train_set, tc);

  std::vector<io::LabeledDetection> rows;
  AaeSummary summary;
  summary.threshold = result.threshold;
  char id[32];
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    std::snprintf(id, sizeof id, "test_%03zu", i);
    auto d = classify(result.model, result.threshold, test_set[i]);
    (d.verdict == Verdict::Anomalous ? summary.false_positives : summary.true_negatives)++;
    rows.push_back({id, d});
  }
  if (!split.damaged.empty() && damaged_sets > 0) {
    const auto damaged = normalized(
        average_random_sets(split.damaged, std::min(set_size, split.damaged.size()), damaged_sets, damaged_seed),
        split.damaged_labels);
    for (std::size_t i = 0; i < damaged.size(); ++i) {
      std::snprintf(id, sizeof id, "damaged_%03zu", i);
      auto d = classify(result.model, result.threshold, damaged[i]);
      (d.verdict == Verdict::Anomalous ? summary.true_positives : summary.false_negatives)++;
      rows.push_back({id, d});
    }
  }

  OutputDir dir(g.out);
  io::write_detections(dir.path("detections.csv"), rows);
  std::vector<io::LabeledDetection> validation;
  for (std::size_t i = 0; i < result.validation_errors.size(); ++i) {
    std::snprintf(id, sizeof id, "validation_%03zu", i);
    validation.push_back({id, {result.validation_errors[i], result.threshold,
                               result.validation_errors[i] > result.threshold ? Verdict::Anomalous : Verdict::Nominal}});
  }
  io::write_detections(dir.path("validation.csv"), validation);
  std::string history = "epoch,reconstruction,discriminator\n";
  for (std::size_t e = 0; e < result.reconstruction_history.size(); ++e) {
    history += std::to_string(e) + ',' + io::format_double(result.reconstruction_history[e]) + ',' +
               io::format_double(result.discriminator_history[e]) + '\n';
  }
  io::write_text(dir.path("history.csv"), history);
  Json model = io::model_to_json(result.model, result.threshold);
  model["manifest_digest"] = manifest.digest;
  model["training"] = {{"samples", train_set.size()}, {"epochs", tc.epochs}, {"batch_size", tc.batch_size},
                       {"learning_rate", tc.learning_rate}, {"threshold_percentile", tc.threshold_percentile}};
  io::write_json(dir.path("model.json"), model);

  CaseStudyReport report;
  report.kind = "aae";
  report.label = bundle.meta.value("case", std::string("bundle")) + "_aae";
  report.aae = summary;
  report.artifacts = {{"detections", "detections.csv"}, {"validation", "validation.csv"}, {"model", "model.json"},
                      {"history", "history.csv"}};
  report.manifest_digest = manifest.digest;
  io::write_json(dir.path("report.json"), report.to_json());
  finish(manifest, dir);
  out << report.to_json().dump(2) << "\n";
  return 0;
}

// ---- detect-mp ----

struct Composition {
  std::size_t nominal = 30;
  std::size_t changed = 0;
};

Composition parse_composition(const std::string& text) {
  Composition c;
  try {
    std::size_t pos = 0;
    c.nominal = std::stoul(text, &pos);
    if (pos < text.size()) {
      if (text[pos] != '+') throw std::invalid_argument(text);
      std::size_t rest = 0;
      c.changed = std::stoul(text.substr(pos + 1), &rest);
      if (pos + 1 + rest != text.size()) throw std::invalid_argument(text);
    }
  } catch (const std::logic_error&) {
    config_error("config key 'composition' must look like 30 or 20+10, got '" + text + "'");
  }
  if (c.nominal + c.changed < 2) config_error("composition needs at least two samples");
  return c;
}

int cmd_detect_mp(const GlobalOptions& g, const std::vector<std::string>& args, const Json& flags, std::ostream& out) {
  Settings s(Json{{"bundle", nullptr},
                  {"seed", 1},
                  {"composition", "30"},
                  {"trials", 100},
                  {"set_size", 5},
                  {"subseq_len", kSpectralLines},
                  {"exclusion_radius", nullptr},
                  {"edge_ignore", nullptr},
                  {"detection_threshold", kDefaultDetectionThreshold},
                  {"engine", "diagonal"},
                  {"surface_stride", 10}});
  s.overlay(load_config(g.config_path, "detect-mp"));
  s.overlay(flags);
  const auto seed = resolve_seed(s, g);
  const fs::path bundle_dir = s.get<std::string>("bundle");
  const auto comp = parse_composition(s.get<std::string>("composition"));
  const auto trials = s.get<std::size_t>("trials");
  const auto set_size = s.get<std::size_t>("set_size");
  const auto l = s.get<std::size_t>("subseq_len");
  const auto stride = std::max<std::size_t>(1, s.get<std::size_t>("surface_stride"));
  if (trials == 0) config_error("config key 'trials' must be at least 1");
  DetectOptions opts;
  if (!s.is_null("exclusion_radius")) opts.exclusion_radius = s.get<std::size_t>("exclusion_radius");
  if (!s.is_null("edge_ignore")) opts.edge_ignore = s.get<std::size_t>("edge_ignore");
  opts.detection_threshold = s.get<double>("detection_threshold");
  const auto engine = s.get<std::string>("engine");
  if (engine == "diagonal") {
    opts.mp.engine = MpEngine::Diagonal;
  } else if (engine == "mass") {
    opts.mp.engine = MpEngine::Mass;
  } else {
    config_error("config key 'engine' must be diagonal or mass");
  }

  const auto bundle = load_bundle(bundle_dir);
  RunManifest manifest = start_manifest("detect-mp", args, s);
  manifest.inputs = {{(bundle_dir / "bundle.json").string(), io::sha256_file(bundle_dir / "bundle.json")}};
  manifest.seeds = {{"master", seed}, {"trial_stream", "derive_seed(master, 2 * trial + {0 nominal, 1 changed})"}};
  manifest.digest = manifest.compute_digest();

  const auto split = split_spectra(bundle, g.threads);
  if (split.nominal.size() < set_size) {
    throw Error(ErrorKind::TooFewSamples, "need at least " + std::to_string(set_size) + " nominal crossings");
  }
  if (comp.changed > 0 && split.damaged.empty()) {
    throw Error(ErrorKind::TooFewSamples, "composition asks for changed samples but the bundle has no damaged crossings");
  }

  std::vector<ObservationSequence> first(1);
  std::vector<CacResult> results(trials);
  std::optional<MpResult> first_mp;
  parallel_for(trials, g.threads, [&](std::size_t t) {
    auto samples = normalized(average_random_sets(split.nominal, set_size, comp.nominal, derive_seed(seed, 2 * t)),
                              split.nominal_labels);
    if (comp.changed > 0) {
      auto changed = normalized(average_random_sets(split.damaged, std::min(set_size, split.damaged.size()), comp.changed,
                                                    derive_seed(seed, 2 * t + 1)),
                                split.damaged_labels);
      samples.insert(samples.end(), changed.begin(), changed.end());
    }
    auto seq = assemble_sequence(std::move(samples),
                                 comp.changed > 0 ? std::optional<std::size_t>(comp.nominal) : std::nullopt);
    results[t] = detect_change(seq, l, opts);
    if (t == 0) {
      first_mp = matrix_profile(seq, l, opts.exclusion_radius.value_or(default_exclusion_radius(l)), opts.mp);
      first[0] = std::move(seq);
    }
  });

  OutputDir dir(g.out);
  const std::size_t m = first[0].sample_length();
  const std::size_t truth = comp.nominal * m;
  CacSummary summary;
  summary.composition = s.get<std::string>("composition");
  summary.trials = trials;
  summary.change_index = results.front().change_index;
  std::string trials_csv = "trial,min_cac,argmin_cac,change_index\n";
  std::string surface = "trial";
  const std::size_t width = results.front().cac.size();
  for (std::size_t k = 0; k < width; k += stride) surface += "," + std::to_string(k);
  surface += '\n';
  for (std::size_t t = 0; t < trials; ++t) {
    const auto& r = results[t];
    summary.min_cac = std::min(summary.min_cac, r.min_cac);
    summary.detections += r.change_index.has_value();
    if (comp.changed > 0) {
      const auto gap = r.argmin_cac > truth ? r.argmin_cac - truth : truth - r.argmin_cac;
      summary.aligned += gap <= m;
    }
    trials_csv += std::to_string(t) + ',' + io::format_double(r.min_cac) + ',' + std::to_string(r.argmin_cac) + ',' +
                  (r.change_index ? std::to_string(*r.change_index) : std::string()) + '\n';
    surface += std::to_string(t);
    for (std::size_t k = 0; k < width; k += stride) surface += ',' + io::format_double(r.cac[k]);
    surface += '\n';
  }
  io::write_text(dir.path("trials.csv"), trials_csv);
  io::write_text(dir.path("surface.csv"), surface);
  io::write_sequence(dir.root() / "sequence_000", first[0]);
  dir.path("sequence_000.csv");
  dir.path("sequence_000.json");
  io::write_matrix_profile(dir.path("mp_000.csv"), *first_mp);
  io::write_cac(dir.path("cac_000.csv"), results.front());
  Json cac_json = io::cac_summary(results.front(), l, first_mp->exclusion_radius);
  cac_json["manifest_digest"] = manifest.digest;
  io::write_json(dir.path("cac_000.json"), cac_json);

  CaseStudyReport report;
  report.kind = "mp";
  report.label = bundle.meta.value("case", std::string("bundle")) + "_mp_" + summary.composition;
  report.cac = summary;
  report.artifacts = {{"trials", "trials.csv"}, {"surface", "surface.csv"}, {"cac_curve", "cac_000.csv"},
                      {"matrix_profile", "mp_000.csv"}, {"sequence", "sequence_000.csv"}};
  report.manifest_digest = manifest.digest;
  io::write_json(dir.path("report.json"), report.to_json());
  finish(manifest, dir);
  out << report.to_json().dump(2) << "\n";
  return 0;
}

// ---- report ----

std::string safe_name(std::string s) {
  for (auto& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return s;
}

int cmd_report(const GlobalOptions& g, const std::vector<std::string>& args, const Json& flags, std::ostream& out) {
  Settings s(Json{{"reports", Json::array()}});
  s.overlay(load_config(g.config_path, "report"));
  s.overlay(flags);
  const auto paths = s.get<std::vector<std::string>>("reports");
  if (paths.empty()) config_error("report needs at least one report path");

  RunManifest manifest = start_manifest("report", args, s);
  std::vector<std::pair<fs::path, CaseStudyReport>> reports;
  for (const auto& p : paths) {
    manifest.inputs.push_back({p, io::sha256_file(p)});
    reports.emplace_back(fs::path(p).parent_path(), CaseStudyReport::from_json(io::read_json(p)));
  }
  manifest.digest = manifest.compute_digest();

  OutputDir dir(g.out);
  Json merged = Json::array();
  std::set<std::string> used_names;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& [base, r] = reports[i];
    std::string name = safe_name(r.label);
    if (!used_names.insert(name).second) name += "_" + std::to_string(i);
    Json entry = r.to_json();
    Json plots = Json::object();
    auto artifact = [&](const char* key) { return base / r.artifacts.at(key).get<std::string>(); };
    if (r.kind == "aae" && r.aae) {
      const auto rows = io::read_detections(artifact("detections"));
      AaeSummary recount;
      std::string csv = "sample_id,group,error,threshold\n";
      for (const auto& d : rows) {
        const bool damaged = d.sample_id.rfind("damaged", 0) == 0;
        const bool flagged = d.result.verdict == Verdict::Anomalous;
        if (damaged) {
          (flagged ? recount.true_positives : recount.false_negatives)++;
        } else {
          (flagged ? recount.false_positives : recount.true_negatives)++;
        }
        csv += d.sample_id + ',' + (damaged ? "damaged" : "nominal") + ',' + io::format_double(d.result.error) + ',' +
               io::format_double(d.result.threshold) + '\n';
      }
      if (recount.true_positives != r.aae->true_positives || recount.false_positives != r.aae->false_positives ||
          recount.true_negatives != r.aae->true_negatives || recount.false_negatives != r.aae->false_negatives) {
        throw Error(ErrorKind::SchemaMismatch, "confusion counts of '" + r.label + "' disagree with its detections file");
      }
      const std::string rel = "errors_" + name + ".csv";
      io::write_text(dir.path(rel), csv);
      plots["errors_vs_threshold"] = rel;
    } else if (r.kind == "mp") {
      for (const char* key : {"surface", "cac_curve", "trials"}) {
        const std::string rel = std::string(key) + "_" + name + ".csv";
        io::write_text(dir.path(rel), io::read_text(artifact(key)));
        plots[key] = rel;
      }
    } else if (r.kind == "fdd") {
      const std::string rel = "spectrum_" + name + ".csv";
      io::write_text(dir.path(rel), io::read_text(artifact("pooled_spectrum")));
      plots["spectrum"] = rel;
    }
    entry["plots"] = std::move(plots);
    merged.push_back(std::move(entry));
  }
  Json doc{{"schema_version", kSchemaVersion}, {"reports", std::move(merged)}, {"manifest_digest", manifest.digest}};
  io::write_json(dir.path("report.json"), doc);
  finish(manifest, dir);
  out << doc.dump(2) << "\n";
  return 0;
}

}  // namespace

// ---- manifest and report documents ----

std::string RunManifest::compute_digest() const {
  Json cfg = config;
  if (cfg.is_object()) {
    cfg.erase("bundle");
    cfg.erase("reports");
  }
  Json in = Json::array();
  for (const auto& f : inputs) in.push_back(f.sha256);
  const Json canon{{"schema_version", schema_version}, {"toolkit_version", toolkit_version}, {"subcommand", subcommand},
                   {"config", cfg}, {"seeds", seeds}, {"inputs", in}};
  return io::sha256_hex(canon.dump());
}

Json RunManifest::to_json() const {
  auto files = [](const std::vector<FileDigest>& v) {
    Json a = Json::array();
    for (const auto& f : v) a.push_back({{"path", f.path}, {"sha256", f.sha256}});
    return a;
  };
  return Json{{"schema_version", schema_version}, {"toolkit_version", toolkit_version}, {"subcommand", subcommand},
              {"command", command}, {"config", config}, {"seeds", seeds}, {"inputs", files(inputs)},
              {"outputs", files(outputs)}, {"digest", digest}};
}

RunManifest RunManifest::from_json(const Json& doc) {
  try {
    RunManifest m;
    m.schema_version = doc.at("schema_version").get<int>();
    if (m.schema_version != kSchemaVersion) {
      throw Error(ErrorKind::SchemaMismatch, "manifest schema_version " + std::to_string(m.schema_version));
    }
    m.toolkit_version = doc.at("toolkit_version").get<std::string>();
    m.subcommand = doc.at("subcommand").get<std::string>();
    m.command = doc.at("command").get<std::vector<std::string>>();
    m.config = doc.at("config");
    m.seeds = doc.at("seeds");
    for (const auto& f : doc.at("inputs")) m.inputs.push_back({f.at("path"), f.at("sha256")});
    for (const auto& f : doc.at("outputs")) m.outputs.push_back({f.at("path"), f.at("sha256")});
    m.digest = doc.at("digest").get<std::string>();
    return m;
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::SchemaMismatch, std::string("manifest: ") + e.what());
  }
}

Json CaseStudyReport::to_json() const {
  Json j{{"schema_version", schema_version}, {"kind", kind}, {"label", label}};
  j["f_b1"] = f_b1 ? Json(*f_b1) : Json(nullptr);
  j["f_vd"] = f_vd ? Json(*f_vd) : Json(nullptr);
  if (aae) {
    j["aae"] = {{"threshold", aae->threshold},        {"true_negatives", aae->true_negatives},
                {"false_positives", aae->false_positives}, {"true_positives", aae->true_positives},
                {"false_negatives", aae->false_negatives}, {"evaluated", aae->evaluated()}};
  } else {
    j["aae"] = nullptr;
  }
  if (cac) {
    j["cac"] = {{"composition", cac->composition}, {"trials", cac->trials},     {"min_cac", cac->min_cac},
                {"detections", cac->detections},   {"aligned", cac->aligned}};
    j["cac"]["change_index"] = cac->change_index ? Json(*cac->change_index) : Json(nullptr);
  } else {
    j["cac"] = nullptr;
  }
  j["artifacts"] = artifacts;
  j["manifest_digest"] = manifest_digest;
  return j;
}

CaseStudyReport CaseStudyReport::from_json(const Json& doc) {
  if (!doc.is_object() || !doc.contains("schema_version") || doc.at("schema_version") != kSchemaVersion) {
    throw Error(ErrorKind::SchemaMismatch, "report schema_version must be " + std::to_string(kSchemaVersion));
  }
  try {
    CaseStudyReport r;
    r.kind = doc.at("kind").get<std::string>();
    r.label = doc.at("label").get<std::string>();
    if (!doc.at("f_b1").is_null()) r.f_b1 = doc.at("f_b1").get<double>();
    if (!doc.at("f_vd").is_null()) r.f_vd = doc.at("f_vd").get<double>();
    if (const auto& a = doc.at("aae"); !a.is_null()) {
      AaeSummary s;
      s.threshold = a.at("threshold").get<double>();
      s.true_negatives = a.at("true_negatives").get<std::size_t>();
      s.false_positives = a.at("false_positives").get<std::size_t>();
      s.true_positives = a.at("true_positives").get<std::size_t>();
      s.false_negatives = a.at("false_negatives").get<std::size_t>();
      if (s.evaluated() != a.at("evaluated").get<std::size_t>()) {
        throw Error(ErrorKind::SchemaMismatch, "confusion counts do not sum to the evaluated count");
      }
      r.aae = s;
    }
    if (const auto& c = doc.at("cac"); !c.is_null()) {
      CacSummary s;
      s.composition = c.at("composition").get<std::string>();
      s.trials = c.at("trials").get<std::size_t>();
      s.min_cac = c.at("min_cac").get<double>();
      s.detections = c.at("detections").get<std::size_t>();
      s.aligned = c.at("aligned").get<std::size_t>();
      if (!c.at("change_index").is_null()) s.change_index = c.at("change_index").get<std::size_t>();
      r.cac = s;
    }
    r.artifacts = doc.at("artifacts");
    r.manifest_digest = doc.at("manifest_digest").get<std::string>();
    return r;
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::SchemaMismatch, std::string("report: ") + e.what());
  }
}

// ---- bundles ----

void write_bundle(const fs::path& dir, const DatasetBundle& bundle, const std::string& case_label,
                  const std::string& manifest_digest) {
  Json records = Json::array();
  for (std::size_t i = 0; i < bundle.records.size(); ++i) {
    const auto& r = bundle.records[i];
    const fs::path stem = dir / "records" / r.label;
    io::write_record(stem, r);
    records.push_back({{"label", r.label},
                       {"seed", bundle.crossings[i].seed},
                       {"damaged", bundle.crossings[i].damaged},
                       {"csv_sha256", io::sha256_file(fs::path(stem) += ".csv")},
                       {"json_sha256", io::sha256_file(fs::path(stem) += ".json")}});
  }
  Json doc{{"schema_version", kSchemaVersion},
           {"case", case_label},
           {"scenario", to_string(bundle.scenario)},
           {"sample_rate", bundle.config.sample_rate},
           {"seed", bundle.config.seed},
           {"beam", beam_json(bundle.beam)},
           {"vehicle", vehicle_json(bundle.vehicle)},
           {"nominal_frequencies", bundle.nominal_frequencies}};
  doc["damaged_beam"] = bundle.damaged_beam ? beam_json(*bundle.damaged_beam) : Json(nullptr);
  doc["damaged_frequencies"] = bundle.damaged_frequencies;
  doc["records"] = std::move(records);
  doc["manifest_digest"] = manifest_digest;
  io::write_json(dir / "bundle.json", doc);
}

LoadedBundle load_bundle(const fs::path& dir) {
  const fs::path meta_path = dir / "bundle.json";
  if (!fs::exists(meta_path)) throw Error(ErrorKind::BundleCorrupt, "no bundle.json in " + dir.string());
  LoadedBundle b;
  try {
    b.meta = io::read_json(meta_path);
  } catch (const Error& e) {
    throw Error(ErrorKind::BundleCorrupt, e.what());
  }
  if (b.meta.value("schema_version", 0) != kSchemaVersion) {
    throw Error(ErrorKind::SchemaMismatch, "bundle schema_version must be " + std::to_string(kSchemaVersion));
  }
  const auto& records = b.meta.value("records", Json::array());
  if (records.empty()) throw Error(ErrorKind::BundleCorrupt, "bundle lists no records");
  for (const auto& entry : records) {
    const fs::path stem = dir / "records" / entry.at("label").get<std::string>();
    const fs::path csv = fs::path(stem) += ".csv", meta = fs::path(stem) += ".json";
    if (!fs::exists(csv) || !fs::exists(meta)) throw Error(ErrorKind::BundleCorrupt, "missing record " + stem.string());
    if (io::sha256_file(csv) != entry.at("csv_sha256") || io::sha256_file(meta) != entry.at("json_sha256")) {
      throw Error(ErrorKind::BundleCorrupt, "digest mismatch for " + stem.string());
    }
    b.records.push_back(io::read_record(stem));
    b.damaged.push_back(entry.value("damaged", false));
  }
  return b;
}

// ---- command line ----

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Drive-by bridge condition assessment toolkit", "driveby"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "JSON config file or a RunManifest to replay");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);

  Json flags = Json::object();
  auto string_flag = [&](CLI::App* sub, const std::string& name, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(name, [&flags, key](const std::string& v) { flags[key] = v; }, help);
  };
  auto count_flag = [&](CLI::App* sub, const std::string& name, const std::string& key, const std::string& help) {
    sub->add_option_function<std::size_t>(name, [&flags, key](const std::size_t& v) { flags[key] = v; }, help);
  };

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset bundle");
  string_flag(sim, "--case", "case", "unsw or bulli");
  string_flag(sim, "--scenario", "scenario", "direct, indirect or driving_test");
  count_flag(sim, "--crossings", "crossings", "Nominal records");
  count_flag(sim, "--damaged", "damaged_crossings", "Added-mass records");

  auto* fdd = app.add_subcommand("fdd", "Frequency domain decomposition of a bundle");
  string_flag(fdd, "--bundle", "bundle", "Bundle directory");
  string_flag(fdd, "--mode", "mode", "direct or indirect");
  count_flag(fdd, "--records", "records", "Pool only the first N records");
  fdd->add_option_function<std::vector<double>>(
         "--band", [&flags](const std::vector<double>& v) { flags["band"] = v; }, "Search band low,high in Hz")
      ->delimiter(',')
      ->expected(2);

  auto* aae = app.add_subcommand("detect-aae", "Adversarial autoencoder damage detection");
  string_flag(aae, "--bundle", "bundle", "Bundle directory");
  count_flag(aae, "--epochs", "epochs", "Training epochs");
  count_flag(aae, "--sets", "nominal_sets", "Averaged nominal samples");

  auto* mp = app.add_subcommand("detect-mp", "Matrix-profile change-point detection");
  string_flag(mp, "--bundle", "bundle", "Bundle directory");
  string_flag(mp, "--composition", "composition", "30 or 20+10");
  count_flag(mp, "--trials", "trials", "Observation sequences");

  auto* rep = app.add_subcommand("report", "Merge case-study reports into plot data");
  rep->add_option_function<std::vector<std::string>>(
      "reports", [&flags](const std::vector<std::string>& v) { flags["reports"] = v; }, "report.json files");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "ConfigInvalid: " << e.what() << "\n";
    return 2;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    if (sim->parsed()) return cmd_simulate(g, args, flags, out);
    if (fdd->parsed()) return cmd_fdd(g, args, flags, out);
    if (aae->parsed()) return cmd_detect_aae(g, args, flags, out);
    if (mp->parsed()) return cmd_detect_mp(g, args, flags, out);
    if (rep->parsed()) return cmd_report(g, args, flags, out);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "IoFailure: " << e.what() << "\n";
    return 3;
  } catch (const Json::exception& e) {
    err << "SchemaMismatch: " << e.what() << "\n";
    return 3;
  } catch (const std::bad_alloc&) {
    err << "out of memory\n";
    return 4;
  }
  return 2;
}

}  // namespace driveby::pipeline
