#include "driveby/aae.hpp"
#include "driveby/error.hpp"
#include "driveby/matrix_profile.hpp"
#include "driveby/pipeline.hpp"
#include "driveby/preprocess.hpp"
#include "driveby/spectral.hpp"
#include "driveby/vbi_sim.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace driveby;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const Array& a) {
  if (a.ndim() != 1) throw py::value_error("expected a 1-D array");
  return {a.data(), a.data() + a.size()};
}

py::array_t<double> to_array(const std::vector<double>& v) {
  return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
}

// Channels as rows of a 2-D array.
py::array_t<double> channels_array(const MultiChannelRecord& rec) {
  const auto rows = static_cast<py::ssize_t>(rec.channel_count());
  const auto cols = static_cast<py::ssize_t>(rec.samples_per_channel());
  py::array_t<double> out({rows, cols});
  auto view = out.mutable_unchecked<2>();
  for (py::ssize_t i = 0; i < rows; ++i) {
    for (py::ssize_t j = 0; j < cols; ++j) view(i, j) = rec.channels[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return out;
}

MultiChannelRecord record_from(const Array& channels, double sample_rate) {
  if (channels.ndim() != 2) throw py::value_error("expected a 2-D array of channels x samples");
  MultiChannelRecord rec;
  rec.sample_rate = sample_rate;
  auto view = channels.unchecked<2>();
  rec.channels.assign(static_cast<std::size_t>(view.shape(0)), std::vector<double>(static_cast<std::size_t>(view.shape(1))));
  for (py::ssize_t i = 0; i < view.shape(0); ++i) {
    for (py::ssize_t j = 0; j < view.shape(1); ++j) rec.channels[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = view(i, j);
  }
  return rec;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Drive-by bridge monitoring: FDD, adversarial autoencoder and matrix-profile tools.";
  m.attr("__version__") = pipeline::kToolkitVersion;

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(PyExc_RuntimeError, e.what());
    }
  });

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = pipeline::run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a driveby command line; returns (exit_code, stdout, stderr).");

  m.def(
      "case_frequencies", [](const std::string& name) { return beam_modal_frequencies(case_beam(case_from_string(name))); },
      py::arg("case"), "Modal frequencies in Hz of the unsw or bulli beam.");

  m.def(
      "simulate_direct",
      [](const std::string& name, std::uint64_t seed, double noise) {
        ScenarioConfig cfg;
        cfg.scenario = Scenario::Direct;
        cfg.sensor_noise_rms = noise;
        return channels_array(simulate_direct_record(case_beam(case_from_string(name)), cfg, seed, "direct"));
      },
      py::arg("case") = "unsw", py::arg("seed") = 0, py::arg("noise") = 0.01,
      "One 15 s, three-channel direct record at 500 Hz.");

  m.def(
      "simulate_crossing",
      [](const std::string& name, std::uint64_t seed, bool damaged) {
        ScenarioConfig cfg;
        auto beam = case_beam(case_from_string(name));
        if (damaged) beam = with_midspan_people(beam);
        return channels_array(simulate_crossing(beam, VehicleModel{}, cfg, seed, "crossing"));
      },
      py::arg("case") = "unsw", py::arg("seed") = 0, py::arg("damaged") = false,
      "Four-channel vehicle record of one crossing at 500 Hz.");

  m.def(
      "singular_spectrum",
      [](const std::vector<Array>& records, double sample_rate, double target_df) {
        std::vector<MultiChannelRecord> recs;
        for (const auto& r : records) recs.push_back(record_from(r, sample_rate));
        WelchOptions opt;
        opt.target_df = target_df;
        const auto s = pooled_singular_spectrum(recs, opt);
        return py::make_tuple(to_array(s.freq), to_array(s.values));
      },
      py::arg("records"), py::arg("sample_rate") = 500.0, py::arg("target_df") = kDefaultTargetDf,
      "Pooled first singular value spectrum; returns (freq, values).");

  m.def(
      "pick_peak",
      [](const Array& freq, const Array& values, double low, double high, double min_prominence) {
        SingularSpectrum s;
        s.freq = to_vector(freq);
        s.values = to_vector(values);
        s.df = s.freq.size() > 1 ? s.freq[1] - s.freq[0] : 0.0;
        return pick_peak(s, {low, high}, min_prominence).peak_freq;
      },
      py::arg("freq"), py::arg("values"), py::arg("low"), py::arg("high"), py::arg("min_prominence") = 0.0,
      "Frequency of the dominant peak inside [low, high].");

  m.def(
      "znorm_distance", [](const Array& a, const Array& b) { return znorm_distance(to_vector(a), to_vector(b)); },
      py::arg("a"), py::arg("b"));

  m.def(
      "matrix_profile",
      [](const Array& seq, std::size_t l, std::optional<std::size_t> radius, unsigned threads) {
        const auto x = to_vector(seq);
        MpOptions opt;
        opt.threads = threads;
        const auto mp = matrix_profile(x, l, radius.value_or(default_exclusion_radius(l)), opt);
        std::vector<std::int64_t> index(mp.index.begin(), mp.index.end());
        return py::make_tuple(to_array(mp.profile), py::array_t<std::int64_t>(static_cast<py::ssize_t>(index.size()), index.data()));
      },
      py::arg("seq"), py::arg("l"), py::arg("exclusion_radius") = py::none(), py::arg("threads") = 1,
      "Matrix profile and index of a 1-D sequence.");

  m.def(
      "corrected_arc_curve",
      [](const Array& seq, std::size_t l, std::optional<std::size_t> edge_ignore) {
        const auto x = to_vector(seq);
        const auto mp = matrix_profile(x, l, default_exclusion_radius(l));
        const auto c = corrected_arc_curve(mp, edge_ignore.value_or(l));
        return py::make_tuple(to_array(c.cac), c.min_cac, c.argmin_cac);
      },
      py::arg("seq"), py::arg("l"), py::arg("edge_ignore") = py::none(),
      "Corrected arc curve; returns (cac, min_cac, argmin).");

  m.def(
      "percentile", [](std::vector<double> v, double pct) { return percentile(std::move(v), pct); }, py::arg("values"),
      py::arg("pct"));
}
