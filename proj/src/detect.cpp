#include "somno/detect.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <optional>

#include "somno/dsp.hpp"
#include "somno/errors.hpp"

namespace somno::detect {

namespace {

constexpr std::array<double, 7> kEpochWeights = {0.12, 0.12, 0.12, 0.12, 1.0, 0.12, 0.12};
constexpr int kFirstOffset = -4;
constexpr std::size_t kMinEpochs = 10;
constexpr std::size_t kSleepOnsetRun = 10;
constexpr double kAudioMedianWindowS = 60.0;

double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<long>(mid), values.end());
  double m = values[mid];
  if (values.size() % 2 == 0) {
    m = (m + *std::max_element(values.begin(), values.begin() + static_cast<long>(mid))) / 2.0;
  }
  return m;
}

/// Median of a sliding multiset kept as a sorted vector.
class SortedWindow {
 public:
  void insert(double v) { values_.insert(std::upper_bound(values_.begin(), values_.end(), v), v); }
  void erase(double v) {
    auto it = std::lower_bound(values_.begin(), values_.end(), v);
    if (it != values_.end() && *it == v) values_.erase(it);
  }
  bool empty() const { return values_.empty(); }
  double median() const {
    const std::size_t n = values_.size();
    return n % 2 == 1 ? values_[n / 2] : (values_[n / 2 - 1] + values_[n / 2]) / 2.0;
  }

 private:
  std::vector<double> values_;
};

/// Index range of samples of `s` whose time lies in [t0, t1].
std::pair<std::size_t, std::size_t> sample_range(const TimeSeries& s, double t0, double t1) {
  const double lo = std::ceil((t0 - s.start_s) * s.rate_hz - 1e-9);
  const double hi = std::floor((t1 - s.start_s) * s.rate_hz + 1e-9) + 1.0;
  const double n = static_cast<double>(s.size());
  return {static_cast<std::size_t>(std::clamp(lo, 0.0, n)),
          static_cast<std::size_t>(std::clamp(hi, 0.0, n))};
}

bool activity_marker(const TimeSeries& activity, double t0, double t1, double threshold) {
  // Each activity sample summarizes the second that starts at its timestamp.
  auto [lo, hi] = sample_range(activity, t0 - 1.0 / activity.rate_hz, t1);
  for (std::size_t i = lo; i < hi; ++i) {
    if (activity.samples[i] >= threshold) return true;
  }
  return false;
}

bool audio_marker(const TimeSeries& audio, double t0, double t1, double jump_db) {
  auto [ref_lo, ref_hi] = sample_range(audio, t0 - kAudioMedianWindowS, t0);
  if (ref_hi <= ref_lo) return false;
  const double reference = median_of(
      {audio.samples.begin() + static_cast<long>(ref_lo), audio.samples.begin() + static_cast<long>(ref_hi)});
  auto [lo, hi] = sample_range(audio, t0, t1);
  for (std::size_t i = lo; i < hi; ++i) {
    if (audio.samples[i] >= reference + jump_db) return true;
  }
  return false;
}

}  // namespace

void DetectorConfig::validate() const {
  if (!(hypopnea_drop_lo > 0.0 && hypopnea_drop_lo < apnea_drop && apnea_drop <= 1.0))
    throw InputError("detector config requires 0 < hypopnea_drop_lo < apnea_drop <= 1");
  if (!(min_event_s >= 10.0)) throw InputError("detector config requires min_event_s >= 10");
  for (double v : {recovery_window_s, arousal_activity_gs, audio_jump_db, central_effort_frac,
                   wake_activity_gs, baseline_window_s}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InputError("detector config values must be positive");
  }
}

DetectorConfig DetectorConfig::from_config(const KeyValueConfig& config) {
  config.reject_unknown({"apnea_drop", "hypopnea_drop_lo", "min_event_s", "recovery_window_s",
                         "arousal_activity_gs", "audio_jump_db", "central_effort_frac",
                         "wake_activity_gs", "baseline_window_s"});
  DetectorConfig c;
  c.apnea_drop = config.get_double("apnea_drop", c.apnea_drop);
  c.hypopnea_drop_lo = config.get_double("hypopnea_drop_lo", c.hypopnea_drop_lo);
  c.min_event_s = config.get_double("min_event_s", c.min_event_s);
  c.recovery_window_s = config.get_double("recovery_window_s", c.recovery_window_s);
  c.arousal_activity_gs = config.get_double("arousal_activity_gs", c.arousal_activity_gs);
  c.audio_jump_db = config.get_double("audio_jump_db", c.audio_jump_db);
  c.central_effort_frac = config.get_double("central_effort_frac", c.central_effort_frac);
  c.wake_activity_gs = config.get_double("wake_activity_gs", c.wake_activity_gs);
  c.baseline_window_s = config.get_double("baseline_window_s", c.baseline_window_s);
  c.validate();
  return c;
}

Hypnogram sleep_wake(const TimeSeries& activity, const DetectorConfig& config) {
  config.validate();
  const auto per_epoch = static_cast<std::size_t>(std::llround(Hypnogram::epoch_s * activity.rate_hz));
  const std::size_t n_epochs = per_epoch == 0 ? 0 : activity.size() / per_epoch;
  if (n_epochs < kMinEpochs) throw InputError("sleep_wake requires at least 10 epochs of activity");

  std::vector<double> epoch_mean(n_epochs, 0.0);
  for (std::size_t e = 0; e < n_epochs; ++e) {
    double s = 0.0;
    for (std::size_t i = e * per_epoch; i < (e + 1) * per_epoch; ++i) s += activity.samples[i];
    epoch_mean[e] = s / static_cast<double>(per_epoch);
  }

  Hypnogram h;
  h.start_s = activity.start_s;
  h.labels.resize(n_epochs);
  for (std::size_t e = 0; e < n_epochs; ++e) {
    double weighted = 0.0, weight = 0.0;
    for (std::size_t j = 0; j < kEpochWeights.size(); ++j) {
      const auto k = static_cast<long long>(e) + kFirstOffset + static_cast<long long>(j);
      if (k < 0 || k >= static_cast<long long>(n_epochs)) continue;
      weighted += kEpochWeights[j] * epoch_mean[static_cast<std::size_t>(k)];
      weight += kEpochWeights[j];
    }
    h.labels[e] = weighted / weight > config.wake_activity_gs ? EpochLabel::wake : EpochLabel::sleep;
  }

  std::optional<std::size_t> onset;
  std::size_t run = 0;
  for (std::size_t e = 0; e < n_epochs && !onset; ++e) {
    run = h.labels[e] == EpochLabel::sleep ? run + 1 : 0;
    if (run == kSleepOnsetRun) onset = e + 1 - kSleepOnsetRun;
  }
  if (!onset) throw ComputeError("no sleep detected");
  std::size_t last_sleep = *onset;
  for (std::size_t e = *onset; e < n_epochs; ++e) {
    if (h.labels[e] == EpochLabel::sleep) last_sleep = e;
  }
  for (std::size_t e = 0; e < n_epochs; ++e) {
    if (e < *onset || e > last_sleep) h.labels[e] = EpochLabel::wake;
  }
  return h;
}

EventType classify_apnea(std::span<const double> effort_during_event, double baseline_effort,
                         const DetectorConfig& config) {
  double mean = 0.0;
  for (double v : effort_during_event) mean += v;
  if (!effort_during_event.empty()) mean /= static_cast<double>(effort_during_event.size());
  return mean < config.central_effort_frac * baseline_effort ? EventType::central_apnea
                                                              : EventType::obstructive_apnea;
}

bool mostly_asleep(const RespEvent& event, const Hypnogram& hypnogram) {
  return hypnogram.sleep_overlap_s(event.start_s, event.end_s) >= 0.5 * event.duration_s();
}

std::vector<RespEvent> detect_events(const TimeSeries& resp_env, const TimeSeries* activity,
                                     const TimeSeries* audio_power, const Hypnogram& hypnogram,
                                     const DetectorConfig& config, const TimeSeries* effort_env) {
  config.validate();
  if (resp_env.samples.empty()) throw InputError("missing resp_env");
  if (effort_env && effort_env->size() != resp_env.size())
    throw InputError("effort_env is not aligned with resp_env");
  const auto& env = resp_env.samples;
  const std::size_t n = env.size();
  const double rate = resp_env.rate_hz;
  const auto window = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(config.baseline_window_s * rate)));
  const double reduction_ratio = 1.0 - config.hypopnea_drop_lo;
  const double apnea_ratio = 1.0 - config.apnea_drop;

  // Trailing median over unflagged samples; flagged samples (at least a
  // hypopnea-level reduction) never enter the window.
  std::vector<double> baseline(n, 0.0);
  std::vector<bool> flagged(n, false);
  {
    double current = median_of({env.begin(), env.begin() + static_cast<long>(std::min(window, n))});
    SortedWindow sorted;
    std::deque<std::size_t> members;
    std::size_t run = 0;
    for (std::size_t i = 0; i < n; ++i) {
      while (!members.empty() && members.front() + window < i + 1) {
        sorted.erase(env[members.front()]);
        members.pop_front();
      }
      if (!sorted.empty()) current = sorted.median();
      baseline[i] = current;
      flagged[i] = current > 0.0 && env[i] <= reduction_ratio * current;
      run = flagged[i] ? run + 1 : 0;
      if (run >= window) {
        // A reduction lasting a whole window is a new level, not an event:
        // re-seed the baseline from it.
        sorted = SortedWindow();
        members.clear();
        for (std::size_t k = i + 1 - window; k <= i; ++k) {
          flagged[k] = false;
          sorted.insert(env[k]);
          members.push_back(k);
        }
        current = sorted.median();
        run = 0;
      } else if (!flagged[i]) {
        sorted.insert(env[i]);
        members.push_back(i);
      }
    }
  }

  auto effort_baseline = [&](std::size_t start) {
    std::vector<double> values;
    const std::size_t lo = start > window ? start - window : 0;
    for (std::size_t i = lo; i < start; ++i) {
      if (!flagged[i]) values.push_back(effort_env->samples[i]);
    }
    if (values.empty()) values = effort_env->samples;
    return median_of(std::move(values));
  };

  const auto min_samples = static_cast<std::size_t>(std::ceil(config.min_event_s * rate - 1e-9));
  std::vector<RespEvent> events;
  std::size_t i = 0;
  while (i < n) {
    if (!flagged[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && flagged[j]) ++j;
    if (j - i >= min_samples) {
      std::size_t longest_core = 0, core = 0;
      for (std::size_t k = i; k < j; ++k) {
        core = env[k] < apnea_ratio * baseline[k] ? core + 1 : 0;
        longest_core = std::max(longest_core, core);
      }
      RespEvent ev;
      ev.start_s = resp_env.time_of(i);
      ev.end_s = resp_env.time_of(j);
      bool keep = true;
      if (longest_core >= min_samples) {
        ev.kind = EventType::obstructive_apnea;
        if (effort_env) {
          ev.kind = classify_apnea(std::span<const double>(effort_env->samples).subspan(i, j - i),
                                   effort_baseline(i), config);
        }
      } else {
        ev.kind = EventType::obstructive_hypopnea;
        const double t1 = ev.end_s + config.recovery_window_s;
        keep = (activity && activity_marker(*activity, ev.end_s, t1, config.arousal_activity_gs)) ||
               (audio_power && audio_marker(*audio_power, ev.end_s, t1, config.audio_jump_db));
      }
      if (keep && mostly_asleep(ev, hypnogram)) events.push_back(ev);
    }
    i = j;
  }
  return events;
}

double compute_ahi(std::span<const RespEvent> events, const Hypnogram& hypnogram) {
  const double sleep_h = hypnogram.total_sleep_s() / 3600.0;
  if (!(sleep_h > 0.0)) throw ComputeError("zero sleep time");
  std::size_t count = 0;
  for (const auto& e : events) {
    if (counts_toward_ahi(e.kind) && mostly_asleep(e, hypnogram)) ++count;
  }
  return static_cast<double>(count) / sleep_h;
}

Detection run_detector(const Recording& recording, const DetectorConfig& config) {
  Recording derived = recording;
  if (!derived.has("activity") || !derived.has("resp_env")) {
    dsp::DeriveOptions options;
    options.probabilities = false;
    options.filtered_accel = false;
    derived = dsp::derive_channels(recording, options);
  }
  Detection d;
  d.hypnogram = sleep_wake(derived.at("activity"), config);
  const TimeSeries* audio = derived.has("audio_power") ? &derived.at("audio_power") : nullptr;
  const TimeSeries* effort = derived.has("effort_env") ? &derived.at("effort_env") : nullptr;
  d.events = detect_events(derived.at("resp_env"), &derived.at("activity"), audio, d.hypnogram, config,
                           effort);
  return d;
}

}  // namespace somno::detect
