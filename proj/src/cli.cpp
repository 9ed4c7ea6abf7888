#include "somno/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "somno/config.hpp"
#include "somno/detect.hpp"
#include "somno/dsp.hpp"
#include "somno/edf.hpp"
#include "somno/errors.hpp"
#include "somno/eval.hpp"
#include "somno/ingest.hpp"
#include "somno/report.hpp"
#include "somno/synth.hpp"

namespace somno::cli {

namespace fs = std::filesystem;

namespace {

std::shared_ptr<spdlog::logger> make_logger(std::ostringstream& sink_stream) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_st>(sink_stream);
  auto logger = std::make_shared<spdlog::logger>("somno", sink);
  logger->set_pattern("[%l] %v");
  const char* env = std::getenv("SOMNO_LOG");
  logger->set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
  return logger;
}

KeyValueConfig load_config(const std::string& path) {
  return path.empty() ? KeyValueConfig() : KeyValueConfig::from_file(path);
}

/// Sub-config holding only the listed keys.
KeyValueConfig subset(const KeyValueConfig& config, const std::set<std::string>& keys) {
  std::string text;
  for (const auto& [k, v] : config.entries()) {
    if (keys.count(k)) text += k + " = " + v + "\n";
  }
  return KeyValueConfig::parse(text);
}

std::string channel_name_for(const std::string& label) {
  std::string out;
  bool sep = false;
  for (char c : label) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == '_' || c == '-') {
      sep = !out.empty();
      continue;
    }
    if (sep) out += '.';
    sep = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

struct Context {
  CommandOutcome& outcome;
  spdlog::logger& log;
  std::ostringstream& out;
};

void cmd_convert(Context& ctx, const std::string& edf_path, const std::string& out_dir,
                 const KeyValueConfig& config) {
  std::set<std::string> known{"patient_id"};
  std::map<std::string, std::string> rename;
  for (const auto& [k, v] : config.entries()) {
    if (k.rfind("channel.", 0) == 0) {
      known.insert(k);
      rename[k.substr(8)] = v;
    }
  }
  config.reject_unknown(known);
  const EdfHeader header = read_edf_header(edf_path);
  auto signals = read_edf(edf_path);
  PatientRecord record;
  record.id = config.get_string("patient_id", "");
  if (record.id.empty()) {
    std::istringstream info(header.patient_info);
    info >> record.id;
  }
  if (record.id.empty() || record.id == "X") record.id = fs::path(edf_path).stem().string();
  Recording rec;
  for (auto& [label, series] : signals) {
    const auto it = rename.find(label);
    const std::string name = it != rename.end() ? it->second : channel_name_for(label);
    if (name.empty()) throw InputError("EDF signal with empty label");
    if (!rec.channels.emplace(name, std::move(series)).second)
      throw InputError("two EDF signals map to channel " + name);
    ctx.log.debug("signal '{}' -> channel {}", label, name);
  }
  record.recording = std::move(rec);
  const fs::path manifest = write_bundle(record, out_dir);
  ctx.log.info("wrote bundle {} with {} channels", manifest.string(), record.recording->channels.size());
  ctx.outcome.report_paths.push_back(manifest);
}

void cmd_derive(Context& ctx, const std::string& patient_dir, const std::string& out_dir,
                const KeyValueConfig& config) {
  config.reject_unknown({"probabilities", "filtered_accel"});
  dsp::DeriveOptions options;
  options.probabilities = config.get_bool("probabilities", options.probabilities);
  options.filtered_accel = config.get_bool("filtered_accel", options.filtered_accel);
  PatientRecord record = read_bundle(fs::path(patient_dir) / "manifest.json");
  record.recording = dsp::derive_channels(*record.recording, options);
  const fs::path manifest = write_bundle(record, out_dir.empty() ? patient_dir : out_dir);
  ctx.log.info("derived channels written to {}", manifest.string());
  ctx.outcome.report_paths.push_back(manifest);
}

void cmd_detect(Context& ctx, const std::string& patient_dir, const std::string& out_dir,
                const KeyValueConfig& config) {
  const detect::DetectorConfig cfg = detect::DetectorConfig::from_config(config);
  const PatientRecord record = read_bundle(fs::path(patient_dir) / "manifest.json");
  const detect::Detection d = detect::run_detector(*record.recording, cfg);
  const fs::path base = out_dir.empty() ? fs::path(patient_dir) : fs::path(out_dir);
  const std::string source(detect::kDetectorSource);
  const fs::path ann = base / "annotations" / (source + ".json");
  const fs::path hyp = base / "hypnograms" / (source + ".json");
  fs::create_directories(ann.parent_path());
  fs::create_directories(hyp.parent_path());
  write_annotations(ann, {source, d.events});
  write_hypnogram(hyp, source, d.hypnogram);
  const double ahi = detect::compute_ahi(d.events, d.hypnogram);
  ctx.out << fmt::format("{}: {} events, {:.1f} h sleep, AHI {:.2f} ({})\n", record.id, d.events.size(),
                         d.hypnogram.total_sleep_s() / 3600.0, ahi, to_string(severity_of(ahi)));
  ctx.outcome.report_paths.push_back(ann);
  ctx.outcome.report_paths.push_back(hyp);
}

void cmd_ahi(Context& ctx, const std::string& patient_dir, const std::string& source) {
  if (source.empty()) throw InputError("ahi requires --source");
  const PatientRecord record = read_patient_dir(patient_dir, false);
  const auto events = record.annotations.find(source);
  if (events == record.annotations.end()) throw InputError("no annotations for source " + source);
  const Hypnogram* hypnogram = nullptr;
  if (auto it = record.hypnograms.find(source); it != record.hypnograms.end()) {
    hypnogram = &it->second;
  } else if (record.hypnograms.size() == 1) {
    hypnogram = &record.hypnograms.begin()->second;
    ctx.log.warn("no hypnogram for {}; using the one from {}", source, record.hypnograms.begin()->first);
  } else {
    throw InputError("no hypnogram for source " + source);
  }
  const double ahi = detect::compute_ahi(events->second, *hypnogram);
  ctx.out << fmt::format("{}\t{}\tAHI {:.2f}\t{}\n", record.id, source, ahi, to_string(severity_of(ahi)));
}

void cmd_eval(Context& ctx, const std::string& manifest, const std::string& out_dir, std::uint64_t seed,
              const std::vector<double>& thresholds, const std::vector<double>& target_ppvs,
              const KeyValueConfig& config) {
  config.reject_unknown({"n_resamples", "level", "bands", "one_to_one", "min_overlap_s", "margin_s"});
  eval::EvalOptions options;
  if (!thresholds.empty()) options.thresholds = thresholds;
  if (!target_ppvs.empty()) options.target_ppvs = target_ppvs;
  options.bootstrap.seed = seed;
  const long long n_resamples = config.get_int("n_resamples", 10000);
  if (n_resamples < 1) throw InputError("n_resamples must be at least 1");
  options.bootstrap.n_resamples = static_cast<std::size_t>(n_resamples);
  options.bootstrap.level = config.get_double("level", 0.95);
  const std::string bands = config.get_string("bands", "four");
  if (bands != "four" && bands != "three") throw InputError("bands must be 'four' or 'three'");
  options.bands = bands == "four" ? eval::SeverityBands::four : eval::SeverityBands::three;
  options.events.one_to_one = config.get_bool("one_to_one", false);
  options.events.min_overlap_s = config.get_double("min_overlap_s", options.events.min_overlap_s);
  options.events.margin_s = config.get_double("margin_s", options.events.margin_s);

  const Cohort cohort = eval::load_cohort(manifest);
  ctx.log.info("loaded {} patients ({} vs {})", cohort.patients.size(), cohort.candidate_source,
               cohort.reference_source);
  const eval::EvalReport report = eval::evaluate_cohort(cohort, options);
  const fs::path dir = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
  fs::create_directories(dir);
  const fs::path json_path = dir / "eval_report.json";
  write_file_atomic(json_path, report::dump_json(report));
  ctx.outcome.report_paths.push_back(json_path);
  for (auto& p : report::render_plot_data(report, dir)) ctx.outcome.report_paths.push_back(p);
  for (const auto& t : report.thresholds) {
    if (!t.note.empty()) ctx.log.warn("AHI >= {}: {}", t.threshold, t.note);
  }
  if (!report.correlation_note.empty()) ctx.log.warn("{}", report.correlation_note);
  ctx.log.info("wrote {}", json_path.string());
}

void cmd_synth(Context& ctx, const std::string& out_dir, std::uint64_t seed, const KeyValueConfig& config) {
  const std::set<std::string> profile_keys{"duration_h", "target_ahi", "apnea_fraction", "central_fraction",
                                           "breath_hz", "breath_amp_g", "noise_g", "position_schedule",
                                           "wake_bouts"};
  std::set<std::string> known = profile_keys;
  known.insert({"patients", "sampler", "ahi_lo", "ahi_hi", "candidate", "drop_rate", "insert_rate_per_h",
                "jitter_sd_s", "write_signals", "random_wake_bouts"});
  config.reject_unknown(known);
  if (out_dir.empty()) throw InputError("synth requires --out");

  synth::CohortOptions options;
  options.base = synth::SynthProfile::from_config(subset(config, profile_keys));
  options.degradation.drop_rate = config.get_double("drop_rate", 0.0);
  options.degradation.insert_rate_per_h = config.get_double("insert_rate_per_h", 0.0);
  options.degradation.jitter_sd_s = config.get_double("jitter_sd_s", 0.0);
  const std::string candidate = config.get_string("candidate", "degraded");
  if (candidate != "degraded" && candidate != "detector")
    throw InputError("candidate must be 'degraded' or 'detector'");
  options.mode = candidate == "detector" ? synth::CandidateMode::detector : synth::CandidateMode::degraded;
  const bool write_signals = config.get_bool("write_signals", false);
  options.keep_recordings = write_signals;
  options.random_wake_bouts = config.get_bool("random_wake_bouts", true);

  const long long n = config.get_int("patients", 1);
  if (n < 1) throw InputError("patients must be at least 1");
  const std::string sampler_name = config.get_string("sampler", config.contains("target_ahi") ? "fixed" : "cohort");
  synth::AhiSampler sampler;
  if (sampler_name == "cohort") {
    sampler = synth::cohort_ahi_sampler();
  } else if (sampler_name == "uniform") {
    sampler = synth::uniform_ahi_sampler(config.get_double("ahi_lo", 0.0), config.get_double("ahi_hi", 55.0));
  } else if (sampler_name == "fixed") {
    const double ahi = options.base.target_ahi;
    sampler = [ahi](std::mt19937_64&) { return ahi; };
  } else {
    throw InputError("sampler must be 'cohort', 'uniform' or 'fixed'");
  }

  const Cohort cohort = synth::generate_cohort(static_cast<std::size_t>(n), sampler, options, seed);
  const fs::path root(out_dir);
  fs::create_directories(root);
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& p : cohort.patients) {
    const fs::path dir = root / p.id;
    fs::create_directories(dir / "annotations");
    fs::create_directories(dir / "hypnograms");
    if (p.recording) write_bundle(p, dir);
    for (const auto& [source, events] : p.annotations) {
      write_annotations(dir / "annotations" / (source + ".json"), {source, events});
    }
    for (const auto& [source, h] : p.hypnograms) write_hypnogram(dir / "hypnograms" / (source + ".json"), source, h);
    manifest.push_back({{"patient_dir", p.id},
                        {"reference_source", cohort.reference_source},
                        {"candidate_source", cohort.candidate_source}});
    ctx.out << fmt::format("{}\ttruth AHI {:.2f}\t{} AHI {:.2f}\n", p.id, p.ahi.at(cohort.reference_source),
                           cohort.candidate_source, p.ahi.at(cohort.candidate_source));
  }
  const fs::path manifest_path = root / "cohort.json";
  write_file_atomic(manifest_path, manifest.dump(2) + "\n");
  ctx.outcome.report_paths.push_back(manifest_path);
  ctx.log.info("wrote {} patients under {}", cohort.patients.size(), root.string());
}

void cmd_report(Context& ctx, const std::string& report_path, const std::string& out_dir) {
  const eval::EvalReport report = report::read_json(report_path);
  const std::string text = report::render_text(report);
  ctx.out << text;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const fs::path txt = fs::path(out_dir) / "report.txt";
    write_file_atomic(txt, text);
    ctx.outcome.report_paths.push_back(txt);
    for (auto& p : report::render_plot_data(report, out_dir)) ctx.outcome.report_paths.push_back(p);
  }
}

}  // namespace

CommandOutcome run(const std::vector<std::string>& args) {
  CommandOutcome outcome;
  std::ostringstream log_stream;
  std::ostringstream out_stream;
  auto logger = make_logger(log_stream);
  Context ctx{outcome, *logger, out_stream};

  CLI::App app{"Sleep apnea recording, detection and agreement toolkit", "somno"};
  app.require_subcommand(1);

  std::string input, out_dir, config_path, source;
  std::uint64_t seed = 0;
  std::vector<double> thresholds, target_ppvs;

  auto* convert = app.add_subcommand("convert", "EDF file to a channel bundle");
  convert->add_option("edf", input, "EDF file")->required();
  convert->add_option("--out", out_dir, "bundle directory")->required();
  convert->add_option("--config", config_path, "key = value config (patient_id, channel.<label>)");

  auto* derive = app.add_subcommand("derive", "add derived channels to a bundle");
  derive->add_option("patient_dir", input)->required();
  derive->add_option("--out", out_dir, "output directory (default: in place)");
  derive->add_option("--config", config_path);

  auto* detect_cmd = app.add_subcommand("detect", "detect respiratory events and sleep/wake");
  detect_cmd->add_option("patient_dir", input)->required();
  detect_cmd->add_option("--out", out_dir, "output directory (default: the patient directory)");
  detect_cmd->add_option("--config", config_path, "detector thresholds");

  auto* ahi = app.add_subcommand("ahi", "AHI and severity of one annotation source");
  ahi->add_option("patient_dir", input)->required();
  ahi->add_option("--source", source, "annotation source")->required();

  auto* eval_cmd = app.add_subcommand("eval", "agreement report for a cohort manifest");
  eval_cmd->add_option("manifest", input, "cohort manifest JSON")->required();
  eval_cmd->add_option("--out", out_dir, "report directory");
  auto* eval_seed = eval_cmd->add_option("--seed", seed, "bootstrap seed");
  eval_cmd->add_option("--threshold", thresholds, "AHI threshold (repeatable)")->allow_extra_args(false);
  eval_cmd->add_option("--target-ppv", target_ppvs, "target PPV (repeatable)")->allow_extra_args(false);
  eval_cmd->add_option("--config", config_path);

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic cohort");
  synth_cmd->add_option("--out", out_dir, "cohort directory")->required();
  auto* synth_seed = synth_cmd->add_option("--seed", seed, "master seed");
  synth_cmd->add_option("--config", config_path, "profile and cohort config");

  auto* report_cmd = app.add_subcommand("report", "render an evaluation report");
  report_cmd->add_option("report", input, "eval_report.json")->required();
  report_cmd->add_option("--out", out_dir, "also write report.txt and CSV plot data here");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream err;
    const int code = app.exit(e, out_stream, err);
    outcome.exit_code = code == 0 ? 0 : 1;
    outcome.log = err.str();
    outcome.output = out_stream.str();
    return outcome;
  }

  try {
    const KeyValueConfig config = load_config(config_path);
    if (*convert) {
      cmd_convert(ctx, input, out_dir, config);
    } else if (*derive) {
      cmd_derive(ctx, input, out_dir, config);
    } else if (*detect_cmd) {
      cmd_detect(ctx, input, out_dir, config);
    } else if (*ahi) {
      cmd_ahi(ctx, input, source);
    } else if (*eval_cmd) {
      if (eval_seed->count() == 0) throw InputError("eval requires an explicit --seed");
      cmd_eval(ctx, input, out_dir, seed, thresholds, target_ppvs, config);
    } else if (*synth_cmd) {
      if (synth_seed->count() == 0) throw InputError("synth requires an explicit --seed");
      cmd_synth(ctx, out_dir, seed, config);
    } else if (*report_cmd) {
      cmd_report(ctx, input, out_dir);
    }
  } catch (const InputError& e) {
    logger->error("{}", e.what());
    outcome.exit_code = 1;
  } catch (const ComputeError& e) {
    logger->error("{}", e.what());
    outcome.exit_code = 2;
  } catch (const fs::filesystem_error& e) {
    logger->error("{}", e.what());
    outcome.exit_code = 1;
  } catch (const std::exception& e) {
    logger->error("internal error: {}", e.what());
    outcome.exit_code = 3;
  }
  logger->flush();
  outcome.log = log_stream.str();
  outcome.output = out_stream.str();
  return outcome;
}

}  // namespace somno::cli
