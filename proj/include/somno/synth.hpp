#pragma once

// Seeded synthetic overnight recordings with ground-truth events and
// hypnograms, annotation degradation, and whole cohorts built from them.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "somno/config.hpp"
#include "somno/detect.hpp"
#include "somno/model.hpp"

namespace somno::synth {

inline constexpr const char* kTruthSource = "truth";
inline constexpr const char* kDegradedSource = "degraded";

struct WakeBout {
  double start_s = 0.0;
  double dur_s = 0.0;
};

struct SynthProfile {
  double duration_h = 7.0;
  double target_ahi = 15.0;
  double apnea_fraction = 0.5;
  double central_fraction = 0.2;
  double breath_hz = 0.25;
  double breath_amp_g = 0.02;
  double noise_g = 0.002;
  /// (start_s, position); the first entry should start at 0.
  std::vector<std::pair<double, PositionLabel>> position_schedule = {{0.0, PositionLabel::supine}};
  /// Snapped outward to the 30 s epoch grid when generating.
  std::vector<WakeBout> wake_bouts = {{0.0, 600.0}};
  std::uint64_t seed = 0;

  /// Throws InputError on out-of-range fields.
  void validate() const;
  /// Keys mirror the field names. position_schedule is "start:label,..." and
  /// wake_bouts is "start:duration,..." in seconds. Unknown keys are rejected.
  static SynthProfile from_config(const KeyValueConfig& config);
};

// Minimum spacing between consecutive events and between events and wake.
inline constexpr double kEventGapS = 30.0;
inline constexpr double kWakeClearanceS = 150.0;
inline constexpr double kMinEventS = 12.0;
inline constexpr double kMaxEventS = 30.0;

struct SynthRecording {
  /// Raw "accel.{x,y,z}" at 100 Hz and "audio_power" at 40 Hz.
  Recording recording;
  std::vector<RespEvent> truth;
  Hypnogram hypnogram;
};

/// Throws ComputeError naming the maximum feasible AHI when the requested
/// number of events cannot be spaced within the sleep time. Without
/// `with_signals` only truth and hypnogram are produced; they are identical
/// to the ones of the full run.
SynthRecording generate_recording(const SynthProfile& profile, bool with_signals = true);

/// Sleep hypnogram of the profile with wake bouts snapped to epochs.
Hypnogram profile_hypnogram(const SynthProfile& profile);

struct Degradation {
  double drop_rate = 0.0;
  double insert_rate_per_h = 0.0;
  double jitter_sd_s = 0.0;

  bool identity() const { return drop_rate == 0.0 && insert_rate_per_h == 0.0 && jitter_sd_s == 0.0; }
};

/// Drops, jitters (keeping at least 10 s) and inserts spurious obstructive
/// hypopneas over [span_begin_s, span_end_s). Output is sorted by start.
std::vector<RespEvent> degrade_annotations(const std::vector<RespEvent>& truth, const Degradation& degradation,
                                           std::uint64_t seed, double span_begin_s, double span_end_s);

using AhiSampler = std::function<double(std::mt19937_64&)>;

/// Gamma-shaped AHI spread with median near 26 and IQR near 31, clamped to
/// [0, 55] so every draw stays placeable.
AhiSampler cohort_ahi_sampler();
/// Uniform target AHI over [lo, hi].
AhiSampler uniform_ahi_sampler(double lo, double hi);

enum class CandidateMode { degraded, detector };

struct CohortOptions {
  SynthProfile base;
  Degradation degradation;
  CandidateMode mode = CandidateMode::degraded;
  detect::DetectorConfig detector;
  /// Keep the generated signals on each patient record.
  bool keep_recordings = false;
  /// Adds a random mid-night wake bout with a position change per patient.
  bool random_wake_bouts = true;
};

/// Profile of patient `index` derived from the master seed.
SynthProfile patient_profile(const CohortOptions& options, const AhiSampler& sampler, std::uint64_t seed,
                             std::size_t index);

/// Patients "P000".."P<n-1>" with reference source "truth" and candidate
/// "degraded" or the detector output.
Cohort generate_cohort(std::size_t n, const AhiSampler& sampler, const CohortOptions& options, std::uint64_t seed);

}  // namespace somno::synth
