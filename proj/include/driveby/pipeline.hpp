#pragma once

#include "driveby/io.hpp"
#include "driveby/vbi_sim.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace driveby::pipeline {

namespace fs = std::filesystem;
using io::Json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolkitVersion = "0.1.0";

struct FileDigest {
  std::string path;
  std::string sha256;
};

// Everything needed to regenerate a command's outputs. The digest covers the
// subcommand, configuration, seeds and input digests; it leaves out the output
// directory, the thread count and the location of input files.
struct RunManifest {
  int schema_version = kSchemaVersion;
  std::string toolkit_version = kToolkitVersion;
  std::string subcommand;
  std::vector<std::string> command;
  Json config = Json::object();
  Json seeds = Json::object();
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;  // relative to the output directory
  std::string digest;

  std::string compute_digest() const;
  Json to_json() const;
  static RunManifest from_json(const Json& doc);
};

struct AaeSummary {
  double threshold = 0.0;
  std::size_t true_negatives = 0;
  std::size_t false_positives = 0;
  std::size_t true_positives = 0;
  std::size_t false_negatives = 0;
  std::size_t evaluated() const { return true_negatives + false_positives + true_positives + false_negatives; }
};

struct CacSummary {
  std::string composition;
  std::size_t trials = 0;
  double min_cac = 1.0;          // lowest interior value over all trials
  std::optional<std::size_t> change_index;  // first trial's detected change
  std::size_t detections = 0;    // trials reporting a change point
  std::size_t aligned = 0;       // trials whose argmin lies within one sample of the truth
};

struct CaseStudyReport {
  int schema_version = kSchemaVersion;
  std::string kind;  // fdd | aae | mp
  std::string label;
  std::optional<double> f_b1;
  std::optional<double> f_vd;
  std::optional<AaeSummary> aae;
  std::optional<CacSummary> cac;
  Json artifacts = Json::object();  // name -> path relative to the report
  std::string manifest_digest;

  Json to_json() const;
  // SchemaMismatch for a different schema_version or malformed content.
  static CaseStudyReport from_json(const Json& doc);
};

// Bundle layout: bundle.json plus records/<label>.csv|json.
void write_bundle(const fs::path& dir, const DatasetBundle& bundle, const std::string& case_label,
                  const std::string& manifest_digest);
// BundleCorrupt when bundle.json lists no records or a record digest differs.
struct LoadedBundle {
  Json meta;
  std::vector<MultiChannelRecord> records;
  std::vector<bool> damaged;
};
LoadedBundle load_bundle(const fs::path& dir);

// Full command-line entry point. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace driveby::pipeline
