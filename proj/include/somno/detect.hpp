#pragma once

// Rule-based respiratory event detector: activity-based wake/sleep epochs,
// amplitude-reduction events on the respiratory envelope, apnea typing from
// the off-axis effort trace, and AHI.

#include <span>
#include <string_view>
#include <vector>

#include "somno/config.hpp"
#include "somno/model.hpp"

namespace somno::detect {

inline constexpr std::string_view kDetectorSource = "automatic-v0";

struct DetectorConfig {
  double apnea_drop = 0.90;
  double hypopnea_drop_lo = 0.30;
  double min_event_s = 10.0;
  double recovery_window_s = 15.0;
  double arousal_activity_gs = 1.0;
  double audio_jump_db = 6.0;
  double central_effort_frac = 0.20;
  double wake_activity_gs = 0.1;
  double baseline_window_s = 120.0;

  /// Throws InputError unless 0 < hypopnea_drop_lo < apnea_drop <= 1 and
  /// min_event_s >= 10, with the remaining fields positive.
  void validate() const;
  /// Unknown keys are rejected.
  static DetectorConfig from_config(const KeyValueConfig& config);
};

/// Weighted epoch score over epochs -4..+2 with weights
/// (0.12, 0.12, 0.12, 0.12, 1.0, 0.12, 0.12), normalized by the weights that
/// fall inside the recording. Epochs scoring above wake_activity_gs are wake;
/// everything before the first run of 10 sleep epochs and after the last
/// sleep epoch is wake.
Hypnogram sleep_wake(const TimeSeries& activity, const DetectorConfig& config);

/// Central when the mean effort during the event is strictly below
/// central_effort_frac times the baseline effort.
EventType classify_apnea(std::span<const double> effort_during_event, double baseline_effort,
                         const DetectorConfig& config);

/// True when at least half of the event lies in sleep epochs.
bool mostly_asleep(const RespEvent& event, const Hypnogram& hypnogram);

/// Detects apneas and hypopneas on the respiratory envelope. `activity`,
/// `audio_power` and `effort_env` may be null; without recovery markers no
/// hypopnea qualifies, and without effort every apnea is obstructive.
/// A reduction lasting a full baseline window re-seeds the baseline.
std::vector<RespEvent> detect_events(const TimeSeries& resp_env, const TimeSeries* activity,
                                     const TimeSeries* audio_power, const Hypnogram& hypnogram,
                                     const DetectorConfig& config,
                                     const TimeSeries* effort_env = nullptr);

/// Apneas and hypopneas with at least half their duration in sleep, per hour
/// of total sleep time.
double compute_ahi(std::span<const RespEvent> events, const Hypnogram& hypnogram);

struct Detection {
  Hypnogram hypnogram;
  std::vector<RespEvent> events;
};

/// Runs sleep_wake and detect_events on a recording, deriving activity and
/// the respiratory traces from acceleration when they are not present.
Detection run_detector(const Recording& recording, const DetectorConfig& config);

}  // namespace somno::detect
