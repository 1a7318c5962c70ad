#pragma once

#include "driveby/aae.hpp"
#include "driveby/matrix_profile.hpp"
#include "driveby/preprocess.hpp"
#include "driveby/spectral.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace driveby::io {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const fs::path& path);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, std::string_view content);

Json read_json(const fs::path& path);
void write_json(const fs::path& path, const Json& doc);

// <stem>.csv with header time_s,ch1,... and <stem>.json carrying sample_rate and label.
void write_record(const fs::path& stem, const MultiChannelRecord& record);
MultiChannelRecord read_record(const fs::path& stem);

void write_spectrum(const fs::path& csv, const SingularSpectrum& spec);
SingularSpectrum read_spectrum(const fs::path& csv);

struct SampleMeta {
  std::uint64_t seed = 0;
  std::size_t set_size = 0;
};

void write_sample(const fs::path& stem, const SpectralSample& sample, const SampleMeta& meta);
SpectralSample read_sample(const fs::path& stem);

void write_sequence(const fs::path& stem, const ObservationSequence& seq);
ObservationSequence read_sequence(const fs::path& stem);

Json model_to_json(const AaeModel& model, double threshold);
AaeModel model_from_json(const Json& doc, double* threshold = nullptr);

struct LabeledDetection {
  std::string sample_id;
  DetectionResult result;
};

void write_detections(const fs::path& csv, const std::vector<LabeledDetection>& rows);
std::vector<LabeledDetection> read_detections(const fs::path& csv);

void write_matrix_profile(const fs::path& csv, const MpResult& mp);
void write_cac(const fs::path& csv, const CacResult& cac);
Json cac_summary(const CacResult& cac, std::size_t subseq_len, std::size_t exclusion_radius);

// Splits one CSV line on commas; no quoting support.
std::vector<std::string> split_csv_line(std::string_view line);
double parse_double(std::string_view token);

}  // namespace driveby::io
