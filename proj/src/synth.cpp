#include "somno/synth.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "somno/dsp.hpp"
#include "somno/errors.hpp"

namespace somno::synth {

namespace {

constexpr double kAccelRate = dsp::kAccelRateHz;
constexpr double kAudioPowerRate = dsp::kAudioPowerRateHz;
constexpr double kEpochS = Hypnogram::epoch_s;

// Signal morphology.
constexpr double kApneaBreathing = 0.02;
constexpr double kHypopneaBreathing = 0.5;
constexpr double kCentralEffort = 0.02;
constexpr double kObstructiveEffort = 0.6;
constexpr double kEffortRatio = 0.3;
constexpr double kWanderDepth = 0.05;
constexpr double kWanderPeriodS = 420.0;
constexpr double kJoltG = 0.11;
constexpr double kJoltS = 0.2;
constexpr double kWakeMovementG = 0.1;
constexpr double kPositionBlendS = 2.0;

constexpr double kAudioBaselineDb = -45.0;
constexpr double kAudioWakeDb = -40.0;
constexpr double kAudioApneaDb = -50.0;
constexpr double kAudioHypopneaDb = -47.0;
constexpr double kGaspDb = 10.0;
constexpr double kGaspS = 2.0;
constexpr double kAudioNoiseDb = 1.0;

std::uint64_t mix(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::array<double, 3> gravity_of(PositionLabel p) {
  switch (p) {
    case PositionLabel::left: return {1.0, 0.0, 0.0};
    case PositionLabel::right: return {-1.0, 0.0, 0.0};
    case PositionLabel::supine: return {0.0, 0.0, 1.0};
    case PositionLabel::prone: return {0.0, 0.0, -1.0};
    case PositionLabel::upright: return {0.0, 1.0, 0.0};
  }
  return {0.0, 0.0, 1.0};
}

PositionLabel parse_position(std::string_view name) {
  for (int i = 0; i < 5; ++i) {
    if (kPositionCodeNames[i] == name) return static_cast<PositionLabel>(i);
  }
  throw InputError("unknown position: " + std::string(name));
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  const auto last = s.find_last_not_of(" \t");
  return first == std::string::npos ? std::string() : s.substr(first, last - first + 1);
}

/// "a:b,c:d" into (a, b) string pairs.
std::vector<std::pair<std::string, std::string>> split_pairs(const std::string& text, const std::string& key) {
  std::vector<std::pair<std::string, std::string>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw InputError(key + ": expected start:value, got '" + item + "'");
    out.emplace_back(trim(item.substr(0, colon)), trim(item.substr(colon + 1)));
  }
  return out;
}

double to_double(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError(key + ": not a number: '" + s + "'");
  }
}

std::vector<bool> wake_epochs(const SynthProfile& profile, std::size_t n_epochs) {
  std::vector<bool> wake(n_epochs, false);
  for (const auto& bout : profile.wake_bouts) {
    const auto first = static_cast<std::ptrdiff_t>(std::floor(bout.start_s / kEpochS));
    const auto last = static_cast<std::ptrdiff_t>(std::ceil((bout.start_s + bout.dur_s) / kEpochS));
    for (std::ptrdiff_t e = std::max<std::ptrdiff_t>(first, 0);
         e < std::min<std::ptrdiff_t>(last, static_cast<std::ptrdiff_t>(n_epochs)); ++e) {
      wake[static_cast<std::size_t>(e)] = true;
    }
  }
  return wake;
}

std::size_t epoch_count(const SynthProfile& profile) {
  return static_cast<std::size_t>(std::llround(profile.duration_h * 3600.0 / kEpochS));
}

struct Segment {
  double begin = 0.0;  // usable placement window
  double end = 0.0;
  std::size_t capacity = 0;
  std::size_t count = 0;
};

std::vector<Segment> sleep_segments(const std::vector<bool>& wake) {
  std::vector<Segment> out;
  std::size_t e = 0;
  while (e < wake.size()) {
    if (wake[e]) {
      ++e;
      continue;
    }
    std::size_t f = e;
    while (f < wake.size() && !wake[f]) ++f;
    Segment s;
    s.begin = static_cast<double>(e) * kEpochS + kWakeClearanceS;
    s.end = static_cast<double>(f) * kEpochS - kWakeClearanceS;
    const double usable = s.end - s.begin;
    if (usable >= kMaxEventS) {
      s.capacity = static_cast<std::size_t>(std::floor((usable + kEventGapS) / (kMaxEventS + kEventGapS)));
    }
    out.push_back(s);
    e = f;
  }
  return out;
}

}  // namespace

void SynthProfile::validate() const {
  if (!(duration_h > 0.0) || !std::isfinite(duration_h)) throw InputError("duration_h must be positive");
  if (!(target_ahi >= 0.0) || !std::isfinite(target_ahi)) throw InputError("target_ahi must be >= 0");
  for (double f : {apnea_fraction, central_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) throw InputError("fractions must lie in [0, 1]");
  }
  if (!(breath_hz > 0.1 && breath_hz < 0.5)) throw InputError("breath_hz must lie in (0.1, 0.5)");
  if (!(breath_amp_g > 0.0)) throw InputError("breath_amp_g must be positive");
  if (!(noise_g >= 0.0)) throw InputError("noise_g must be >= 0");
  if (position_schedule.empty()) throw InputError("position_schedule must not be empty");
  for (std::size_t i = 1; i < position_schedule.size(); ++i) {
    if (!(position_schedule[i].first > position_schedule[i - 1].first))
      throw InputError("position_schedule must be strictly increasing in time");
  }
  for (const auto& b : wake_bouts) {
    if (!(b.start_s >= 0.0) || !(b.dur_s > 0.0)) throw InputError("wake bouts need start >= 0 and duration > 0");
  }
}

SynthProfile SynthProfile::from_config(const KeyValueConfig& config) {
  config.reject_unknown({"duration_h", "target_ahi", "apnea_fraction", "central_fraction", "breath_hz",
                         "breath_amp_g", "noise_g", "position_schedule", "wake_bouts", "seed"});
  SynthProfile p;
  p.duration_h = config.get_double("duration_h", p.duration_h);
  p.target_ahi = config.get_double("target_ahi", p.target_ahi);
  p.apnea_fraction = config.get_double("apnea_fraction", p.apnea_fraction);
  p.central_fraction = config.get_double("central_fraction", p.central_fraction);
  p.breath_hz = config.get_double("breath_hz", p.breath_hz);
  p.breath_amp_g = config.get_double("breath_amp_g", p.breath_amp_g);
  p.noise_g = config.get_double("noise_g", p.noise_g);
  if (auto v = config.get("position_schedule")) {
    p.position_schedule.clear();
    for (const auto& [start, label] : split_pairs(*v, "position_schedule")) {
      p.position_schedule.emplace_back(to_double(start, "position_schedule"), parse_position(label));
    }
  }
  if (auto v = config.get("wake_bouts")) {
    p.wake_bouts.clear();
    for (const auto& [start, dur] : split_pairs(*v, "wake_bouts")) {
      p.wake_bouts.push_back({to_double(start, "wake_bouts"), to_double(dur, "wake_bouts")});
    }
  }
  const long long seed = config.get_int("seed", 0);
  if (seed < 0) throw InputError("seed must be non-negative");
  p.seed = static_cast<std::uint64_t>(seed);
  p.validate();
  return p;
}

Hypnogram profile_hypnogram(const SynthProfile& profile) {
  const std::size_t n = epoch_count(profile);
  const std::vector<bool> wake = wake_epochs(profile, n);
  Hypnogram h;
  h.start_s = 0.0;
  h.labels.reserve(n);
  for (bool w : wake) h.labels.push_back(w ? EpochLabel::wake : EpochLabel::sleep);
  return h;
}

SynthRecording generate_recording(const SynthProfile& profile, bool with_signals) {
  profile.validate();
  std::mt19937_64 rng(profile.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SynthRecording out;
  out.hypnogram = profile_hypnogram(profile);
  const std::size_t n_epochs = out.hypnogram.labels.size();
  if (n_epochs == 0) throw InputError("duration_h is shorter than one epoch");
  const double duration_s = static_cast<double>(n_epochs) * kEpochS;
  const double sleep_h = out.hypnogram.total_sleep_s() / 3600.0;

  // Event placement.
  std::vector<bool> wake(n_epochs);
  for (std::size_t e = 0; e < n_epochs; ++e) wake[e] = out.hypnogram.labels[e] == EpochLabel::wake;
  std::vector<Segment> segments = sleep_segments(wake);
  std::size_t capacity = 0;
  for (const auto& s : segments) capacity += s.capacity;
  const auto n_events = static_cast<std::size_t>(std::llround(profile.target_ahi * sleep_h));
  if (n_events > capacity) {
    const double max_ahi = sleep_h > 0.0 ? static_cast<double>(capacity) / sleep_h : 0.0;
    throw ComputeError("infeasible event placement: maximum feasible AHI is " +
                       std::to_string(std::floor(max_ahi * 10.0) / 10.0));
  }
  for (std::size_t k = 0; k < n_events; ++k) {
    Segment* best = nullptr;
    double best_room = -1.0;
    for (auto& s : segments) {
      if (s.count >= s.capacity) continue;
      const double room = (s.end - s.begin) / static_cast<double>(s.count + 1);
      if (room > best_room) {
        best_room = room;
        best = &s;
      }
    }
    ++best->count;
  }
  for (const auto& s : segments) {
    if (s.count == 0) continue;
    std::vector<double> durations(s.count), offsets(s.count);
    double used = 0.0;
    for (auto& d : durations) {
      d = kMinEventS + (kMaxEventS - kMinEventS) * unit(rng);
      used += d;
    }
    const double slack = (s.end - s.begin) - used - kEventGapS * static_cast<double>(s.count - 1);
    for (auto& o : offsets) o = slack * unit(rng);
    std::sort(offsets.begin(), offsets.end());
    double cursor = s.begin;
    for (std::size_t i = 0; i < s.count; ++i) {
      const double start = cursor + offsets[i];
      out.truth.push_back({EventType::obstructive_hypopnea, start, start + durations[i]});
      cursor += durations[i] + kEventGapS;
    }
  }
  for (auto& e : out.truth) {
    if (unit(rng) < profile.apnea_fraction) {
      e.kind = unit(rng) < profile.central_fraction ? EventType::central_apnea : EventType::obstructive_apnea;
    }
  }

  if (!with_signals) return out;

  // Accelerometer.
  const auto n = static_cast<std::size_t>(std::llround(duration_s * kAccelRate));
  auto sample_of = [&](double t) {
    return static_cast<std::size_t>(std::clamp(std::llround(t * kAccelRate), 0LL, static_cast<long long>(n)));
  };
  std::vector<double> breathing(n, 1.0), effort(n, 1.0);
  for (const auto& e : out.truth) {
    double b = kHypopneaBreathing, f = 1.0;
    if (e.kind == EventType::central_apnea) {
      b = kApneaBreathing;
      f = kCentralEffort;
    } else if (e.kind == EventType::obstructive_apnea) {
      b = kApneaBreathing;
      f = kObstructiveEffort;
    }
    for (std::size_t i = sample_of(e.start_s); i < sample_of(e.end_s); ++i) {
      breathing[i] = b;
      effort[i] = f;
    }
  }

  const double phase = 2.0 * std::numbers::pi * unit(rng);
  const double wander_phase = 2.0 * std::numbers::pi * unit(rng);
  const double move_phase_x = 2.0 * std::numbers::pi * unit(rng);
  const double move_phase_y = 2.0 * std::numbers::pi * unit(rng);
  TriaxialSeries accel;
  for (TimeSeries* axis : {&accel.x, &accel.y, &accel.z}) {
    axis->rate_hz = kAccelRate;
    axis->units = "g";
    axis->resolution = dsp::kAccelResolution;
    axis->samples.resize(n);
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto& schedule = profile.position_schedule;
  std::size_t current = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kAccelRate;
    while (current + 1 < schedule.size() && t >= schedule[current + 1].first - kPositionBlendS / 2.0) ++current;
    std::array<double, 3> g = gravity_of(schedule[current].second);
    if (current > 0) {
      // Raised-cosine blend from the previous position around the change time.
      const double u = (t - (schedule[current].first - kPositionBlendS / 2.0)) / kPositionBlendS;
      if (u < 1.0) {
        const double w = 0.5 - 0.5 * std::cos(std::numbers::pi * std::clamp(u, 0.0, 1.0));
        const auto prev = gravity_of(schedule[current - 1].second);
        for (int a = 0; a < 3; ++a) g[a] = prev[a] + w * (g[a] - prev[a]);
      }
    }
    const double amp = profile.breath_amp_g *
                       (1.0 + kWanderDepth * std::sin(2.0 * std::numbers::pi * t / kWanderPeriodS + wander_phase));
    const double arg = 2.0 * std::numbers::pi * profile.breath_hz * t + phase;
    double x = g[0];
    double y = g[1] + effort[i] * kEffortRatio * amp * std::cos(arg);
    double z = g[2] + breathing[i] * amp * std::sin(arg);
    const auto epoch = std::min(static_cast<std::size_t>(t / kEpochS), n_epochs - 1);
    if (wake[epoch]) {
      x += kWakeMovementG * std::sin(2.0 * std::numbers::pi * 5.0 * t + move_phase_x);
      y += kWakeMovementG * std::sin(2.0 * std::numbers::pi * 4.3 * t + move_phase_y);
    }
    accel.x.samples[i] = x;
    accel.y.samples[i] = y;
    accel.z.samples[i] = z;
  }

  // Recovery jolt along the horizontal gravity axis (x when lying flat).
  current = 0;
  for (const auto& e : out.truth) {
    while (current + 1 < schedule.size() && e.end_s >= schedule[current + 1].first) ++current;
    const auto g = gravity_of(schedule[current].second);
    auto& axis = std::abs(g[1]) > std::abs(g[0]) ? accel.y.samples : accel.x.samples;
    const double sign = (std::abs(g[1]) > std::abs(g[0]) ? g[1] : g[0]) < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = sample_of(e.end_s); i < sample_of(e.end_s + kJoltS); ++i) axis[i] += sign * kJoltG;
  }

  for (TimeSeries* axis : {&accel.x, &accel.y, &accel.z}) {
    for (double& v : axis->samples) {
      v = quantize_value(v + profile.noise_g * noise(rng), dsp::kAccelResolution);
    }
  }
  out.recording.put_triaxial("accel", std::move(accel));

  // Audio power.
  TimeSeries audio;
  audio.rate_hz = kAudioPowerRate;
  audio.units = "dB";
  audio.resolution = dsp::kAudioPowerResolution;
  const auto m = static_cast<std::size_t>(std::llround(duration_s * kAudioPowerRate));
  std::vector<double> level(m, kAudioBaselineDb);
  for (std::size_t i = 0; i < m; ++i) {
    const auto epoch = std::min(static_cast<std::size_t>(static_cast<double>(i) / kAudioPowerRate / kEpochS),
                                n_epochs - 1);
    if (wake[epoch]) level[i] = kAudioWakeDb;
  }
  auto audio_index = [&](double t) {
    return static_cast<std::size_t>(std::clamp(std::llround(t * kAudioPowerRate), 0LL, static_cast<long long>(m)));
  };
  for (const auto& e : out.truth) {
    const double db = is_apnea(e.kind) ? kAudioApneaDb : kAudioHypopneaDb;
    for (std::size_t i = audio_index(e.start_s); i < audio_index(e.end_s); ++i) level[i] = db;
    for (std::size_t i = audio_index(e.end_s); i < audio_index(e.end_s + kGaspS); ++i)
      level[i] = kAudioBaselineDb + kGaspDb;
  }
  audio.samples.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    audio.samples[i] = quantize_value(level[i] + kAudioNoiseDb * noise(rng), dsp::kAudioPowerResolution);
  }
  out.recording.channels["audio_power"] = std::move(audio);
  return out;
}

std::vector<RespEvent> degrade_annotations(const std::vector<RespEvent>& truth, const Degradation& degradation,
                                           std::uint64_t seed, double span_begin_s, double span_end_s) {
  if (!(degradation.drop_rate >= 0.0 && degradation.drop_rate <= 1.0))
    throw InputError("drop_rate must lie in [0, 1]");
  if (!(degradation.insert_rate_per_h >= 0.0) || !(degradation.jitter_sd_s >= 0.0))
    throw InputError("degradation rates must be non-negative");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 1.0);
  constexpr double kMinDegradedS = 10.0;

  std::vector<RespEvent> out;
  for (const auto& e : truth) {
    if (!counts_toward_ahi(e.kind)) {
      out.push_back(e);
      continue;
    }
    if (unit(rng) < degradation.drop_rate) continue;
    RespEvent d = e;
    if (degradation.jitter_sd_s > 0.0) {
      d.start_s += degradation.jitter_sd_s * jitter(rng);
      d.end_s += degradation.jitter_sd_s * jitter(rng);
      if (d.end_s - d.start_s < kMinDegradedS) d.end_s = d.start_s + kMinDegradedS;
    }
    out.push_back(d);
  }
  if (degradation.insert_rate_per_h > 0.0 && span_end_s > span_begin_s) {
    std::exponential_distribution<double> gap(degradation.insert_rate_per_h / 3600.0);
    for (double t = span_begin_s + gap(rng); t < span_end_s; t += gap(rng)) {
      const double dur = kMinDegradedS + 20.0 * unit(rng);
      out.push_back({EventType::obstructive_hypopnea, t, t + dur});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RespEvent& a, const RespEvent& b) { return a.start_s < b.start_s; });
  return out;
}

AhiSampler cohort_ahi_sampler() {
  // Shape 1.55 and scale 26 / median(Gamma(1.55, 1)) give a median near 26
  // and an interquartile range near 31.
  return [](std::mt19937_64& rng) {
    std::gamma_distribution<double> gamma(1.55, 21.0976);
    return std::clamp(gamma(rng), 0.0, 55.0);
  };
}

AhiSampler uniform_ahi_sampler(double lo, double hi) {
  if (!(lo >= 0.0 && hi >= lo)) throw InputError("uniform AHI sampler needs 0 <= lo <= hi");
  return [lo, hi](std::mt19937_64& rng) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
}

SynthProfile patient_profile(const CohortOptions& options, const AhiSampler& sampler, std::uint64_t seed,
                             std::size_t index) {
  std::mt19937_64 rng(mix(seed, index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SynthProfile p = options.base;
  p.target_ahi = sampler(rng);
  p.seed = rng();
  if (options.random_wake_bouts) {
    constexpr std::array<PositionLabel, 4> lying = {PositionLabel::supine, PositionLabel::left,
                                                    PositionLabel::right, PositionLabel::prone};
    const double duration_s = p.duration_h * 3600.0;
    const double start = kEpochS * std::floor((0.35 + 0.3 * unit(rng)) * duration_s / kEpochS);
    const double dur = kEpochS * std::round((120.0 + 180.0 * unit(rng)) / kEpochS);
    p.wake_bouts.push_back({start, dur});
    const auto first = static_cast<std::size_t>(unit(rng) * 4.0) % 4;
    const auto second = (first + 1 + static_cast<std::size_t>(unit(rng) * 3.0) % 3) % 4;
    p.position_schedule = {{0.0, lying[first]}, {start + dur / 2.0, lying[second]}};
  }
  return p;
}

Cohort generate_cohort(std::size_t n, const AhiSampler& sampler, const CohortOptions& options, std::uint64_t seed) {
  if (n == 0) throw InputError("cohort size must be at least 1");
  Cohort cohort;
  cohort.reference_source = kTruthSource;
  cohort.candidate_source =
      options.mode == CandidateMode::detector ? std::string(detect::kDetectorSource) : kDegradedSource;
  cohort.patients.resize(n);

  auto build = [&](std::size_t i) {
    const SynthProfile profile = patient_profile(options, sampler, seed, i);
    const bool signals = options.mode == CandidateMode::detector || options.keep_recordings;
    SynthRecording rec = generate_recording(profile, signals);
    PatientRecord& p = cohort.patients[i];
    char id[16];
    std::snprintf(id, sizeof id, "P%03zu", i);
    p.id = id;
    p.annotations[cohort.reference_source] = rec.truth;
    p.hypnograms[cohort.reference_source] = rec.hypnogram;
    p.ahi[cohort.reference_source] = detect::compute_ahi(rec.truth, rec.hypnogram);
    if (options.mode == CandidateMode::detector) {
      detect::Detection d = detect::run_detector(rec.recording, options.detector);
      p.ahi[cohort.candidate_source] = detect::compute_ahi(d.events, d.hypnogram);
      p.annotations[cohort.candidate_source] = std::move(d.events);
      p.hypnograms[cohort.candidate_source] = std::move(d.hypnogram);
    } else {
      std::vector<RespEvent> cand = options.degradation.identity()
                                        ? rec.truth
                                        : degrade_annotations(rec.truth, options.degradation, mix(profile.seed, 1),
                                                              rec.hypnogram.start_s, rec.hypnogram.end_s());
      p.ahi[cohort.candidate_source] = detect::compute_ahi(cand, rec.hypnogram);
      p.annotations[cohort.candidate_source] = std::move(cand);
      p.hypnograms[cohort.candidate_source] = rec.hypnogram;
    }
    if (options.keep_recordings) p.recording = std::move(rec.recording);
  };

  // Patients are independent given their derived seeds, so the result does
  // not depend on the number of workers.
  const std::size_t workers = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        build(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return cohort;
}

}  // namespace somno::synth
