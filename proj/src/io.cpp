#include "driveby/io.hpp"

#include "driveby/error.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace driveby::io {

namespace {

constexpr char kHex[] = "0123456789abcdef";

[[noreturn]] void fail_io(const std::string& what) { throw Error(ErrorKind::IoFailure, what); }

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  std::istringstream in(read_text(path));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

fs::path with_ext(const fs::path& stem, const char* ext) {
  fs::path p = stem;
  p += ext;
  return p;
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "linear";
}

Activation activation_from(const std::string& s) {
  if (s == "linear") return Activation::Linear;
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw Error(ErrorKind::SchemaMismatch, "unknown activation '" + s + "'");
}

Json mlp_to_json(const Mlp& net) {
  Json layers = Json::array();
  for (const auto& l : net.layers()) {
    Json w = Json::array();
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(format_double(l.weight(r, c)));
    }
    Json b = Json::array();
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) b.push_back(format_double(l.bias(r)));
    layers.push_back({{"outputs", l.outputs()},
                      {"inputs", l.inputs()},
                      {"activation", activation_name(l.activation)},
                      {"weight", std::move(w)},
                      {"bias", std::move(b)}});
  }
  return layers;
}

Mlp mlp_from_json(const Json& layers) {
  std::vector<DenseLayer> out;
  for (const auto& j : layers) {
    DenseLayer l;
    const auto rows = j.at("outputs").get<Eigen::Index>();
    const auto cols = j.at("inputs").get<Eigen::Index>();
    const auto& w = j.at("weight");
    const auto& b = j.at("bias");
    if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows) {
      throw Error(ErrorKind::SchemaMismatch, "layer weight count does not match its shape");
    }
    l.weight.resize(rows, cols);
    l.bias.resize(rows);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) l.weight(r, c) = parse_double(w[k++].get<std::string>());
    }
    for (Eigen::Index r = 0; r < rows; ++r) l.bias(r) = parse_double(b[r].get<std::string>());
    l.activation = activation_from(j.at("activation").get<std::string>());
    out.push_back(std::move(l));
  }
  return Mlp(std::move(out));
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view token) {
  while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
  while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
  double v = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw Error(ErrorKind::IoFailure, "malformed number '" + std::string(token) + "'");
  }
  return v;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), md, &len) != 1) {
    throw Error(ErrorKind::IoFailure, "sha256 digest failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[md[i] >> 4]);
    hex.push_back(kHex[md[i] & 0xF]);
  }
  return hex;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text(path)); }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_io("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) fail_io("short write to " + path.string());
}

Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::IoFailure, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& doc) { write_text(path, doc.dump(2) + "\n"); }

void write_record(const fs::path& stem, const MultiChannelRecord& record) {
  record.validate();
  std::string csv = "time_s";
  for (std::size_t c = 0; c < record.channel_count(); ++c) csv += ",ch" + std::to_string(c + 1);
  csv += '\n';
  for (std::size_t t = 0; t < record.samples_per_channel(); ++t) {
    csv += format_double(static_cast<double>(t) / record.sample_rate);
    for (const auto& ch : record.channels) {
      csv += ',';
      csv += format_double(ch[t]);
    }
    csv += '\n';
  }
  write_text(with_ext(stem, ".csv"), csv);
  write_json(with_ext(stem, ".json"), Json{{"label", record.label}, {"sample_rate", record.sample_rate}});
}

MultiChannelRecord read_record(const fs::path& stem) {
  const Json meta = read_json(with_ext(stem, ".json"));
  MultiChannelRecord rec;
  rec.label = meta.at("label").get<std::string>();
  rec.sample_rate = meta.at("sample_rate").get<double>();
  const auto lines = read_lines(with_ext(stem, ".csv"));
  if (lines.empty()) throw Error(ErrorKind::IoFailure, "empty record " + stem.string());
  const auto header = split_csv_line(lines.front());
  if (header.size() < 2 || header.front() != "time_s") {
    throw Error(ErrorKind::IoFailure, "record header must start with time_s: " + stem.string());
  }
  rec.channels.assign(header.size() - 1, {});
  for (auto& ch : rec.channels) ch.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split_csv_line(lines[i]);
    if (cells.size() != header.size()) throw Error(ErrorKind::IoFailure, "ragged row in " + stem.string());
    for (std::size_t c = 1; c < cells.size(); ++c) rec.channels[c - 1].push_back(parse_double(cells[c]));
  }
  rec.validate();
  return rec;
}

void write_spectrum(const fs::path& csv, const SingularSpectrum& spec) {
  std::string out = "freq_hz,s1\n";
  for (std::size_t k = 0; k < spec.values.size(); ++k) {
    out += format_double(spec.freq[k]) + ',' + format_double(spec.values[k]) + '\n';
  }
  write_text(csv, out);
}

SingularSpectrum read_spectrum(const fs::path& csv) {
  const auto lines = read_lines(csv);
  if (lines.empty() || lines.front() != "freq_hz,s1") throw Error(ErrorKind::IoFailure, "bad spectrum header in " + csv.string());
  SingularSpectrum spec;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split_csv_line(lines[i]);
    if (cells.size() != 2) throw Error(ErrorKind::IoFailure, "bad spectrum row in " + csv.string());
    spec.freq.push_back(parse_double(cells[0]));
    spec.values.push_back(parse_double(cells[1]));
  }
  if (spec.freq.size() >= 2) spec.df = spec.freq[1] - spec.freq[0];
  return spec;
}

void write_sample(const fs::path& stem, const SpectralSample& sample, const SampleMeta& meta) {
  if (sample.freq.size() != sample.values.size()) {
    throw Error(ErrorKind::InvalidArgument, "sample needs one frequency per value");
  }
  std::string out = "freq_hz,value\n";
  for (std::size_t k = 0; k < sample.values.size(); ++k) {
    out += format_double(sample.freq[k]) + ',' + format_double(sample.values[k]) + '\n';
  }
  write_text(with_ext(stem, ".csv"), out);
  write_json(with_ext(stem, ".json"), Json{{"source_ids", sample.source_ids},
                                           {"seed", meta.seed},
                                           {"set_size", meta.set_size},
                                           {"normalized", sample.normalized}});
}

SpectralSample read_sample(const fs::path& stem) {
  const Json meta = read_json(with_ext(stem, ".json"));
  SpectralSample s;
  s.source_ids = meta.at("source_ids").get<std::vector<std::string>>();
  s.normalized = meta.value("normalized", true);
  const auto lines = read_lines(with_ext(stem, ".csv"));
  if (lines.empty() || lines.front() != "freq_hz,value") throw Error(ErrorKind::IoFailure, "bad sample header");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split_csv_line(lines[i]);
    if (cells.size() != 2) throw Error(ErrorKind::IoFailure, "bad sample row");
    s.freq.push_back(parse_double(cells[0]));
    s.values.push_back(parse_double(cells[1]));
  }
  return s;
}

void write_sequence(const fs::path& stem, const ObservationSequence& seq) {
  std::string out = "value\n";
  for (double v : seq.flat) out += format_double(v) + '\n';
  write_text(with_ext(stem, ".csv"), out);
  Json manifest{{"sample_length", seq.sample_length()}, {"boundaries", seq.boundaries}};
  manifest["truth_change_index"] = seq.truth_change_index ? Json(*seq.truth_change_index) : Json(nullptr);
  Json sources = Json::array();
  for (const auto& s : seq.samples) sources.push_back(s.source_ids);
  manifest["source_ids"] = std::move(sources);
  write_json(with_ext(stem, ".json"), manifest);
}

ObservationSequence read_sequence(const fs::path& stem) {
  const Json manifest = read_json(with_ext(stem, ".json"));
  const auto lines = read_lines(with_ext(stem, ".csv"));
  if (lines.empty() || lines.front() != "value") throw Error(ErrorKind::IoFailure, "bad sequence header");
  const auto m = manifest.at("sample_length").get<std::size_t>();
  const auto& sources = manifest.at("source_ids");
  if (m == 0 || (lines.size() - 1) % m != 0) throw Error(ErrorKind::IoFailure, "sequence length is not a multiple of the sample length");
  std::vector<SpectralSample> samples((lines.size() - 1) / m);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto& s = samples[(i - 1) / m];
    s.values.push_back(parse_double(lines[i]));
    s.normalized = true;
  }
  for (std::size_t k = 0; k < samples.size() && k < sources.size(); ++k) {
    samples[k].source_ids = sources[k].get<std::vector<std::string>>();
  }
  std::optional<std::size_t> truth;
  if (!manifest.at("truth_change_index").is_null()) truth = manifest.at("truth_change_index").get<std::size_t>();
  return assemble_sequence(std::move(samples), truth);
}

Json model_to_json(const AaeModel& model, double threshold) {
  return Json{{"latent_dim", model.latent_dim},
              {"seed", model.rng_seed},
              {"threshold", format_double(threshold)},
              {"encoder", mlp_to_json(model.encoder)},
              {"decoder", mlp_to_json(model.decoder)},
              {"discriminator", mlp_to_json(model.discriminator)}};
}

AaeModel model_from_json(const Json& doc, double* threshold) {
  try {
    AaeModel m;
    m.latent_dim = doc.at("latent_dim").get<std::size_t>();
    m.rng_seed = doc.at("seed").get<std::uint64_t>();
    m.encoder = mlp_from_json(doc.at("encoder"));
    m.decoder = mlp_from_json(doc.at("decoder"));
    m.discriminator = mlp_from_json(doc.at("discriminator"));
    m.validate();
    if (threshold) *threshold = parse_double(doc.at("threshold").get<std::string>());
    return m;
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::SchemaMismatch, std::string("model document: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::DimensionMismatch) throw;
    throw Error(ErrorKind::SchemaMismatch, std::string("model document: ") + e.what());
  }
}

void write_detections(const fs::path& csv, const std::vector<LabeledDetection>& rows) {
  std::string out = "sample_id,error,threshold,verdict\n";
  for (const auto& r : rows) {
    out += r.sample_id + ',' + format_double(r.result.error) + ',' + format_double(r.result.threshold) + ',' +
           (r.result.verdict == Verdict::Anomalous ? "anomalous" : "nominal") + '\n';
  }
  write_text(csv, out);
}

std::vector<LabeledDetection> read_detections(const fs::path& csv) {
  const auto lines = read_lines(csv);
  if (lines.empty() || lines.front() != "sample_id,error,threshold,verdict") {
    throw Error(ErrorKind::IoFailure, "bad detections header in " + csv.string());
  }
  std::vector<LabeledDetection> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split_csv_line(lines[i]);
    if (cells.size() != 4) throw Error(ErrorKind::IoFailure, "bad detections row");
    LabeledDetection d;
    d.sample_id = cells[0];
    d.result.error = parse_double(cells[1]);
    d.result.threshold = parse_double(cells[2]);
    if (cells[3] == "anomalous") {
      d.result.verdict = Verdict::Anomalous;
    } else if (cells[3] == "nominal") {
      d.result.verdict = Verdict::Nominal;
    } else {
      throw Error(ErrorKind::IoFailure, "unknown verdict '" + cells[3] + "'");
    }
    rows.push_back(std::move(d));
  }
  return rows;
}

void write_matrix_profile(const fs::path& csv, const MpResult& mp) {
  std::string out = "idx,profile,index\n";
  for (std::size_t i = 0; i < mp.profile.size(); ++i) {
    out += std::to_string(i) + ',' + format_double(mp.profile[i]) + ',' + std::to_string(mp.index[i]) + '\n';
  }
  write_text(csv, out);
}

void write_cac(const fs::path& csv, const CacResult& cac) {
  std::string out = "idx,ac,iac,cac\n";
  for (std::size_t i = 0; i < cac.cac.size(); ++i) {
    out += std::to_string(i) + ',' + format_double(cac.ac[i]) + ',' + format_double(cac.iac[i]) + ',' +
           format_double(cac.cac[i]) + '\n';
  }
  write_text(csv, out);
}

Json cac_summary(const CacResult& cac, std::size_t subseq_len, std::size_t exclusion_radius) {
  Json j{{"min_cac", cac.min_cac},
         {"argmin_cac", cac.argmin_cac},
         {"subseq_len", subseq_len},
         {"exclusion_radius", exclusion_radius},
         {"edge_ignore", cac.edge_ignore}};
  j["change_index"] = cac.change_index ? Json(*cac.change_index) : Json(nullptr);
  return j;
}

}  // namespace driveby::io
