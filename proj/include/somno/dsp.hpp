#pragma once

// Derivation of the scorer-facing channels from raw chest-worn recordings:
// band-passed acceleration, activity, audio power, body position, the
// respiratory envelope and the breathing/snoring probability stand-ins.

#include <cstddef>
#include <vector>

#include "somno/model.hpp"

namespace somno::dsp {

// Output rates and quantization steps of the derived channels.
inline constexpr double kAccelRateHz = 100.0;
inline constexpr double kAudioRateHz = 8000.0;
inline constexpr double kActivityRateHz = 1.0;
inline constexpr double kAudioPowerRateHz = 40.0;
inline constexpr double kProbabilityRateHz = 3.2;
inline constexpr double kPositionWindowS = 30.0;

inline constexpr double kAccelResolution = 4e-5;        // g
inline constexpr double kActivityResolution = 2e-3;     // g/s
inline constexpr double kAudioPowerResolution = 4e-3;   // dB
inline constexpr double kProbabilityResolution = 3e-5;  // probability
inline constexpr double kHeartRateResolution = 2e-3;    // bpm

inline constexpr double kRespBandLoHz = 0.1;
inline constexpr double kRespBandHiHz = 1.0;
inline constexpr double kAudioFloorDb = -96.0;

/// One second-order IIR section in transposed direct form II.
class Biquad {
 public:
  static Biquad lowpass(double cutoff_hz, double rate_hz);
  static Biquad highpass(double cutoff_hz, double rate_hz);

  /// Sets the state to the steady-state response of a constant input.
  void settle(double input);
  double step(double input);
  double dc_gain() const;

 private:
  double b0_ = 1, b1_ = 0, b2_ = 0, a1_ = 0, a2_ = 0;
  double s1_ = 0, s2_ = 0;
};

/// Causal 2nd-order Butterworth high-pass at f_lo cascaded with a 2nd-order
/// Butterworth low-pass at f_hi. The filter starts settled on the first
/// sample, so constant inputs produce zero output from the first sample on.
TimeSeries bandpass(const TimeSeries& series, double f_lo_hz, double f_hi_hz);
TriaxialSeries bandpass(const TriaxialSeries& series, double f_lo_hz, double f_hi_hz);

/// Number of leading output samples (1/f_lo seconds) flagged as settling.
std::size_t transient_samples(double rate_hz, double f_lo_hz);

/// 1 Hz activity from 100 Hz acceleration: L2-norm of x and y, first
/// difference, absolute value, times 10, clipped to [0, 10] g/s, maximum per
/// second, quantized to 2e-3.
TimeSeries activity(const TriaxialSeries& accel);

/// 40 Hz audio power in dBFS from 8 kHz audio in [-1, 1]: RMS over
/// non-overlapping 200-sample windows, floored at -96 dB, quantized to 4e-3.
TimeSeries audio_power(const TimeSeries& audio);

struct PositionTrack {
  double start_s = 0.0;
  std::vector<PositionLabel> labels;
  /// Windows whose gravity estimate was too weak (< 0.5 g) to label.
  std::vector<bool> flagged;

  /// Codes 0..4 at one sample per 30 s.
  TimeSeries as_series() const;
};

/// Label for one gravity estimate; holds `previous` when no axis dominates.
PositionLabel classify_gravity(double gx, double gy, double gz, PositionLabel previous,
                               bool* flagged = nullptr);
PositionTrack position(const TriaxialSeries& accel);

struct RespiratoryTraces {
  TimeSeries projected;  // band-passed acceleration on the principal axis, 100 Hz
  TimeSeries envelope;   // 10 s moving RMS of `projected`, 3.2 Hz
  TimeSeries effort;     // 10 s moving RMS of the off-axis residual, 3.2 Hz
};

/// Band-passes each axis, projects every 60 s block onto its principal axis
/// and takes centred 10 s moving RMS values every 0.3125 s.
RespiratoryTraces respiratory_traces(const TriaxialSeries& accel);
TimeSeries resp_envelope(const TriaxialSeries& accel);

struct Probabilities {
  TimeSeries breathing;
  TimeSeries snore;
  bool snore_missing = false;
};

/// Heuristic stand-ins for the breathing and snoring probability channels.
/// `projected` is the 100 Hz principal-axis trace; `audio` is raw 8 kHz audio
/// or null, in which case snore probability is all zero and flagged missing.
Probabilities derive_probabilities(const TimeSeries& projected, const TimeSeries* audio);

struct DeriveOptions {
  bool probabilities = true;
  bool filtered_accel = true;
};

/// Adds the derived channels to a recording under their reserved names:
/// accel_bp.{x,y,z}, activity, audio_power (when raw "audio" is present),
/// resp_env, effort_env, position, and optionally breathing_prob/snore_prob.
Recording derive_channels(const Recording& recording, const DeriveOptions& options = {});

}  // namespace somno::dsp
