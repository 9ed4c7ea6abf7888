#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "somno/cli.hpp"
#include "somno/detect.hpp"
#include "somno/dsp.hpp"
#include "somno/eval.hpp"
#include "somno/report.hpp"
#include "somno/synth.hpp"

namespace py = pybind11;
using namespace somno;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using EventTuple = std::tuple<std::string, double, double>;

std::vector<double> to_vector(const Array& a) {
  if (a.ndim() != 1) throw InputError("expected a one-dimensional array");
  return {a.data(), a.data() + a.size()};
}

Array to_array(const std::vector<double>& v) { return Array(static_cast<py::ssize_t>(v.size()), v.data()); }

TimeSeries series(const Array& a, double rate_hz) {
  TimeSeries s;
  s.rate_hz = rate_hz;
  s.samples = to_vector(a);
  return s;
}

TriaxialSeries triaxial(const Array& x, const Array& y, const Array& z) {
  return {series(x, dsp::kAccelRateHz), series(y, dsp::kAccelRateHz), series(z, dsp::kAccelRateHz)};
}

std::vector<RespEvent> events_from(const std::vector<EventTuple>& items) {
  std::vector<RespEvent> out;
  for (const auto& [kind, start, end] : items) out.push_back({parse_event_type(kind), start, end});
  return out;
}

std::vector<EventTuple> events_to(const std::vector<RespEvent>& events) {
  std::vector<EventTuple> out;
  for (const auto& e : events) out.emplace_back(std::string(to_string(e.kind)), e.start_s, e.end_s);
  return out;
}

Hypnogram hypnogram_from(const std::vector<std::string>& labels, double start_s) {
  Hypnogram h;
  h.start_s = start_s;
  for (const auto& l : labels) {
    if (l == "sleep") {
      h.labels.push_back(EpochLabel::sleep);
    } else if (l == "wake") {
      h.labels.push_back(EpochLabel::wake);
    } else {
      throw InputError("hypnogram labels must be 'sleep' or 'wake'");
    }
  }
  return h;
}

std::vector<std::string> hypnogram_to(const Hypnogram& h) {
  std::vector<std::string> out;
  for (auto l : h.labels) out.emplace_back(l == EpochLabel::sleep ? "sleep" : "wake");
  return out;
}

std::vector<eval::PatientAhi> pairs_from(const std::vector<double>& ref, const std::vector<double>& cand) {
  if (ref.size() != cand.size()) throw InputError("ref and cand must have the same length");
  std::vector<eval::PatientAhi> out;
  for (std::size_t i = 0; i < ref.size(); ++i) out.push_back({std::to_string(i), ref[i], cand[i]});
  eval::validate(out);
  return out;
}

py::object metric(const eval::Metric& m) { return m ? py::cast(*m) : py::none(); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Sleep apnea signal derivation, event detection and agreement statistics";

  static py::exception<InputError> input_error(m, "InputError", PyExc_ValueError);
  static py::exception<ComputeError> compute_error(m, "ComputeError", PyExc_ArithmeticError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const InputError& e) {
      py::set_error(input_error, e.what());
    } catch (const ComputeError& e) {
      py::set_error(compute_error, e.what());
    }
  });

  m.def("severity_of", [](double ahi) { return std::string(to_string(severity_of(ahi))); }, py::arg("ahi"));
  m.def("quantize", [](const Array& a, double resolution) {
    std::vector<double> v = to_vector(a);
    for (double& x : v) x = quantize_value(x, resolution);
    return to_array(v);
  }, py::arg("values"), py::arg("resolution"));

  m.def("bandpass", [](const Array& a, double rate_hz, double f_lo, double f_hi) {
    return to_array(dsp::bandpass(series(a, rate_hz), f_lo, f_hi).samples);
  }, py::arg("samples"), py::arg("rate_hz"), py::arg("f_lo"), py::arg("f_hi"));
  m.def("activity", [](const Array& x, const Array& y, const Array& z) {
    return to_array(dsp::activity(triaxial(x, y, z)).samples);
  }, py::arg("x"), py::arg("y"), py::arg("z"), "1 Hz activity from 100 Hz acceleration");
  m.def("audio_power", [](const Array& audio) {
    return to_array(dsp::audio_power(series(audio, dsp::kAudioRateHz)).samples);
  }, py::arg("audio"), "40 Hz audio power in dB from 8 kHz audio");
  m.def("resp_envelope", [](const Array& x, const Array& y, const Array& z) {
    return to_array(dsp::resp_envelope(triaxial(x, y, z)).samples);
  }, py::arg("x"), py::arg("y"), py::arg("z"));

  m.def("detect", [](const Array& x, const Array& y, const Array& z, std::optional<Array> audio_power) {
    Recording rec;
    rec.put_triaxial("accel", triaxial(x, y, z));
    if (audio_power) rec.channels["audio_power"] = series(*audio_power, dsp::kAudioPowerRateHz);
    const detect::Detection d = detect::run_detector(rec, {});
    return py::make_tuple(events_to(d.events), hypnogram_to(d.hypnogram));
  }, py::arg("x"), py::arg("y"), py::arg("z"), py::arg("audio_power") = py::none(),
     "Returns (events, hypnogram labels) with default detector settings");
  m.def("compute_ahi", [](const std::vector<EventTuple>& events, const std::vector<std::string>& hypnogram,
                          double start_s) {
    return detect::compute_ahi(events_from(events), hypnogram_from(hypnogram, start_s));
  }, py::arg("events"), py::arg("hypnogram"), py::arg("start_s") = 0.0);

  m.def("binary_metrics", [](const std::vector<double>& ref, const std::vector<double>& cand, double t) {
    const auto b = eval::binary_metrics(pairs_from(ref, cand), t);
    py::dict d;
    d["tp"] = b.tp;
    d["fp"] = b.fp;
    d["fn"] = b.fn;
    d["tn"] = b.tn;
    d["sensitivity"] = metric(b.sensitivity);
    d["ppv"] = metric(b.ppv);
    return d;
  }, py::arg("ref"), py::arg("cand"), py::arg("threshold"));
  m.def("auc", [](const std::vector<double>& ref, const std::vector<double>& cand, double t_ref) {
    const auto c = eval::auc_curves(pairs_from(ref, cand), t_ref);
    return py::make_tuple(c.auc_roc, c.auc_pr);
  }, py::arg("ref"), py::arg("cand"), py::arg("t_ref"), "Returns (auc_roc, auc_pr)");
  m.def("min_threshold_for_ppv", [](const std::vector<double>& ref, const std::vector<double>& cand,
                                    double t_ref, double target) {
    const auto t = eval::min_threshold_for_ppv(pairs_from(ref, cand), t_ref, target);
    py::dict d;
    d["tau"] = t.tau;
    d["sensitivity"] = metric(t.sensitivity);
    d["ppv"] = t.ppv;
    return d;
  }, py::arg("ref"), py::arg("cand"), py::arg("t_ref"), py::arg("target_ppv"));
  m.def("icc", [](const std::vector<double>& ref, const std::vector<double>& cand) {
    const auto r = eval::icc_2_1(pairs_from(ref, cand));
    return py::make_tuple(r.icc, r.p_value);
  }, py::arg("ref"), py::arg("cand"), "ICC(2,1) and its p-value");
  m.def("pearson", [](const std::vector<double>& ref, const std::vector<double>& cand) {
    const auto r = eval::pearson(pairs_from(ref, cand));
    return py::make_tuple(r.r, r.p_value);
  }, py::arg("ref"), py::arg("cand"));
  m.def("bland_altman", [](const std::vector<double>& ref, const std::vector<double>& cand) {
    const auto b = eval::bland_altman(pairs_from(ref, cand));
    py::dict d;
    d["bias"] = b.bias;
    d["sd"] = b.sd;
    d["loa_lo"] = b.loa_lo;
    d["loa_hi"] = b.loa_hi;
    return d;
  }, py::arg("ref"), py::arg("cand"));
  m.def("event_match", [](const std::vector<EventTuple>& pred, const std::vector<EventTuple>& ref,
                          double min_overlap_s, double margin_s, bool one_to_one) {
    const auto r = eval::event_match(events_from(pred), events_from(ref), {min_overlap_s, margin_s, one_to_one});
    py::dict d;
    d["n_pred"] = r.n_pred;
    d["n_ref"] = r.n_ref;
    d["tp_pred"] = r.tp_pred;
    d["detected_ref"] = r.detected_ref;
    d["ppv"] = metric(r.ppv);
    d["sensitivity"] = metric(r.sensitivity);
    return d;
  }, py::arg("pred"), py::arg("ref"), py::arg("min_overlap_s") = 3.0, py::arg("margin_s") = 20.0,
     py::arg("one_to_one") = false);
  m.def("bootstrap_mean_ci", [](const std::vector<double>& values, std::size_t n_resamples, std::uint64_t seed,
                                double level) {
    const auto stat = [](std::span<const double> s) -> eval::Metric {
      double sum = 0.0;
      for (double v : s) sum += v;
      return sum / static_cast<double>(s.size());
    };
    const auto i = eval::bootstrap_ci(std::span<const double>(values), stat, {n_resamples, seed, level});
    return py::make_tuple(metric(i.lo), metric(i.hi));
  }, py::arg("values"), py::arg("n_resamples") = 10000, py::arg("seed") = 0, py::arg("level") = 0.95);

  m.def("evaluate", [](const std::string& manifest, std::uint64_t seed, std::size_t n_resamples) {
    eval::EvalOptions options;
    options.bootstrap.seed = seed;
    options.bootstrap.n_resamples = n_resamples;
    return report::dump_json(eval::evaluate_cohort(eval::load_cohort(manifest), options));
  }, py::arg("manifest"), py::arg("seed"), py::arg("n_resamples") = 10000, "Report JSON for a cohort manifest");
  m.def("render_report", [](const std::string& json_text) { return report::render_text(report::parse_json(json_text)); },
        py::arg("report_json"));

  m.def("generate_recording", [](const std::map<std::string, std::string>& profile) {
    std::string text;
    for (const auto& [k, v] : profile) text += k + " = " + v + "\n";
    const synth::SynthRecording r = synth::generate_recording(synth::SynthProfile::from_config(KeyValueConfig::parse(text)));
    py::dict d;
    d["x"] = to_array(r.recording.at("accel.x").samples);
    d["y"] = to_array(r.recording.at("accel.y").samples);
    d["z"] = to_array(r.recording.at("accel.z").samples);
    d["audio_power"] = to_array(r.recording.at("audio_power").samples);
    d["events"] = events_to(r.truth);
    d["hypnogram"] = hypnogram_to(r.hypnogram);
    return d;
  }, py::arg("profile"), "Synthetic recording from profile keys given as strings");

  m.def("run_cli", [](const std::vector<std::string>& args) {
    const cli::CommandOutcome o = cli::run(args);
    return py::make_tuple(o.exit_code, o.output, o.log);
  }, py::arg("args"), "Runs one command-line subcommand; returns (exit_code, stdout, log)");
}
