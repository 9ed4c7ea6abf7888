#include "somno/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "somno/errors.hpp"

namespace somno::dsp {

namespace {

constexpr double kEnvelopeWindowS = 10.0;
constexpr double kProjectionBlockS = 60.0;
constexpr double kBreathingWindowS = 30.0;
constexpr double kBreathingDecimatedHz = 10.0;
constexpr double kSnoreLoHz = 30.0;
constexpr double kSnoreHiHz = 300.0;
constexpr double kSnoreSlope = 12.0;
constexpr double kSnoreMidpoint = 0.5;

void require_rate(const TimeSeries& s, double rate_hz, const char* what) {
  if (std::abs(s.rate_hz - rate_hz) > 1e-9 * rate_hz)
    throw InputError(std::string(what) + " expects " + std::to_string(rate_hz) + " Hz input, got " +
                     std::to_string(s.rate_hz) + " Hz");
}

TimeSeries like(const TimeSeries& src, double rate_hz, std::string units) {
  TimeSeries out;
  out.rate_hz = rate_hz;
  out.start_s = src.start_s;
  out.units = std::move(units);
  return out;
}

std::size_t derived_count(std::size_t n_input, double input_rate, double output_rate) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n_input) / input_rate * output_rate));
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Logistic squash rescaled so that 0 maps to 0 and 1 maps to 1.
double squash_ratio(double ratio) {
  const double lo = logistic(-kSnoreSlope * kSnoreMidpoint);
  const double hi = logistic(kSnoreSlope * (1.0 - kSnoreMidpoint));
  const double v = (logistic(kSnoreSlope * (ratio - kSnoreMidpoint)) - lo) / (hi - lo);
  return std::clamp(v, 0.0, 1.0);
}

/// Centred moving RMS of `x` sampled at `rate_hz`, evaluated every
/// 1/out_rate seconds.
std::vector<double> moving_rms(const std::vector<double>& x, double rate_hz, double out_rate,
                               double window_s) {
  std::vector<double> prefix(x.size() + 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) prefix[i + 1] = prefix[i] + x[i] * x[i];
  const std::size_t n_out = derived_count(x.size(), rate_hz, out_rate);
  const auto half = static_cast<long long>(std::llround(window_s * rate_hz / 2.0));
  const auto n = static_cast<long long>(x.size());
  std::vector<double> out(n_out, 0.0);
  for (std::size_t k = 0; k < n_out; ++k) {
    const auto center = static_cast<long long>(std::llround(static_cast<double>(k) * rate_hz / out_rate));
    const long long lo = std::max(0LL, center - half);
    const long long hi = std::min(n, center + half);
    if (hi <= lo) continue;
    const double energy = prefix[static_cast<std::size_t>(hi)] - prefix[static_cast<std::size_t>(lo)];
    out[k] = std::sqrt(std::max(0.0, energy) / static_cast<double>(hi - lo));
  }
  return out;
}

}  // namespace

Biquad Biquad::lowpass(double cutoff_hz, double rate_hz) {
  const double w0 = 2.0 * std::numbers::pi * cutoff_hz / rate_hz;
  const double alpha = std::sin(w0) / std::numbers::sqrt2;  // Q = 1/sqrt(2)
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  Biquad q;
  q.b0_ = (1.0 - c) / 2.0 / a0;
  q.b1_ = (1.0 - c) / a0;
  q.b2_ = (1.0 - c) / 2.0 / a0;
  q.a1_ = -2.0 * c / a0;
  q.a2_ = (1.0 - alpha) / a0;
  return q;
}

Biquad Biquad::highpass(double cutoff_hz, double rate_hz) {
  const double w0 = 2.0 * std::numbers::pi * cutoff_hz / rate_hz;
  const double alpha = std::sin(w0) / std::numbers::sqrt2;  // Q = 1/sqrt(2)
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  Biquad q;
  q.b0_ = (1.0 + c) / 2.0 / a0;
  q.b1_ = -(1.0 + c) / a0;
  q.b2_ = (1.0 + c) / 2.0 / a0;
  q.a1_ = -2.0 * c / a0;
  q.a2_ = (1.0 - alpha) / a0;
  return q;
}

double Biquad::dc_gain() const { return (b0_ + b1_ + b2_) / (1.0 + a1_ + a2_); }

void Biquad::settle(double input) {
  const double y = dc_gain() * input;
  s2_ = b2_ * input - a2_ * y;
  s1_ = b1_ * input - a1_ * y + s2_;
}

double Biquad::step(double input) {
  const double y = b0_ * input + s1_;
  s1_ = b1_ * input - a1_ * y + s2_;
  s2_ = b2_ * input - a2_ * y;
  return y;
}

TimeSeries bandpass(const TimeSeries& series, double f_lo_hz, double f_hi_hz) {
  if (!(f_lo_hz > 0.0) || !(f_hi_hz > f_lo_hz) || !(f_hi_hz < series.rate_hz / 2.0))
    throw InputError("bandpass requires 0 < f_lo < f_hi < rate/2");
  Biquad hp = Biquad::highpass(f_lo_hz, series.rate_hz);
  Biquad lp = Biquad::lowpass(f_hi_hz, series.rate_hz);
  TimeSeries out = like(series, series.rate_hz, series.units);
  out.samples.resize(series.size());
  if (series.samples.empty()) return out;
  const double first = series.samples.front();
  hp.settle(first);
  lp.settle(hp.dc_gain() * first);
  for (std::size_t i = 0; i < series.size(); ++i) out.samples[i] = lp.step(hp.step(series.samples[i]));
  return out;
}

TriaxialSeries bandpass(const TriaxialSeries& series, double f_lo_hz, double f_hi_hz) {
  return {bandpass(series.x, f_lo_hz, f_hi_hz), bandpass(series.y, f_lo_hz, f_hi_hz),
          bandpass(series.z, f_lo_hz, f_hi_hz)};
}

std::size_t transient_samples(double rate_hz, double f_lo_hz) {
  return static_cast<std::size_t>(std::ceil(rate_hz / f_lo_hz));
}

TimeSeries activity(const TriaxialSeries& accel) {
  validate(accel, "accel");
  require_rate(accel.x, kAccelRateHz, "activity");
  const std::size_t n = accel.size();
  const auto per_second = static_cast<std::size_t>(kAccelRateHz);
  TimeSeries out = like(accel.x, kActivityRateHz, "g/s");
  out.samples.assign((n + per_second - 1) / per_second, 0.0);
  double previous_norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = accel.x.samples[i];
    const double y = accel.y.samples[i];
    const double norm = std::sqrt(x * x + y * y);
    const double diff = i == 0 ? 0.0 : norm - previous_norm;
    previous_norm = norm;
    const double a = std::clamp(10.0 * std::abs(diff), 0.0, 10.0);
    double& slot = out.samples[i / per_second];
    slot = std::max(slot, a);
  }
  return quantize(out, kActivityResolution);
}

TimeSeries audio_power(const TimeSeries& audio) {
  require_rate(audio, kAudioRateHz, "audio_power");
  for (double v : audio.samples) {
    if (!(v >= -1.0 && v <= 1.0)) throw InputError("audio samples must lie in [-1, 1]");
  }
  constexpr std::size_t window = 200;
  TimeSeries out = like(audio, kAudioPowerRateHz, "dB");
  const std::size_t n_out = audio.size() / window;
  out.samples.resize(n_out);
  for (std::size_t k = 0; k < n_out; ++k) {
    double energy = 0.0;
    for (std::size_t i = k * window; i < (k + 1) * window; ++i) energy += audio.samples[i] * audio.samples[i];
    const double rms = std::sqrt(energy / static_cast<double>(window));
    out.samples[k] = rms > 0.0 ? std::max(kAudioFloorDb, 20.0 * std::log10(rms)) : kAudioFloorDb;
  }
  return quantize(out, kAudioPowerResolution);
}

TimeSeries PositionTrack::as_series() const {
  TimeSeries out;
  out.rate_hz = 1.0 / kPositionWindowS;
  out.start_s = start_s;
  out.units = "code";
  out.samples.reserve(labels.size());
  for (auto l : labels) out.samples.push_back(static_cast<double>(static_cast<int>(l)));
  return out;
}

PositionLabel classify_gravity(double gx, double gy, double gz, PositionLabel previous,
                               bool* flagged) {
  const double norm = std::sqrt(gx * gx + gy * gy + gz * gz);
  if (flagged) *flagged = norm < 0.5;
  if (norm < 0.5) return previous;
  const double ax = std::abs(gx), ay = std::abs(gy), az = std::abs(gz);
  const double dominant = std::max({ax, ay, az});
  if (dominant < 0.6 * norm) return previous;
  if (dominant == az) return gz > 0 ? PositionLabel::supine : PositionLabel::prone;
  if (dominant == ax) return gx > 0 ? PositionLabel::left : PositionLabel::right;
  return PositionLabel::upright;
}

PositionTrack position(const TriaxialSeries& accel) {
  validate(accel, "accel");
  const auto window = static_cast<std::size_t>(std::llround(kPositionWindowS * accel.rate_hz()));
  const std::size_t n_windows = window == 0 ? 0 : accel.size() / window;
  if (n_windows == 0) throw InputError("position requires at least 30 s of acceleration");
  PositionTrack track;
  track.start_s = accel.start_s();
  PositionLabel previous = PositionLabel::supine;
  for (std::size_t w = 0; w < n_windows; ++w) {
    double sx = 0, sy = 0, sz = 0;
    for (std::size_t i = w * window; i < (w + 1) * window; ++i) {
      sx += accel.x.samples[i];
      sy += accel.y.samples[i];
      sz += accel.z.samples[i];
    }
    const auto m = static_cast<double>(window);
    bool flagged = false;
    previous = classify_gravity(sx / m, sy / m, sz / m, previous, &flagged);
    track.labels.push_back(previous);
    track.flagged.push_back(flagged);
  }
  return track;
}

RespiratoryTraces respiratory_traces(const TriaxialSeries& accel) {
  validate(accel, "accel");
  require_rate(accel.x, kAccelRateHz, "resp_envelope");
  const double rate = accel.rate_hz();
  const auto block = static_cast<std::size_t>(kProjectionBlockS * rate);
  const std::size_t n = accel.size();
  if (n < block) throw InputError("resp_envelope requires at least 60 s of acceleration");

  const TriaxialSeries f = bandpass(accel, kRespBandLoHz, kRespBandHiHz);
  const std::vector<double>* axes[3] = {&f.x.samples, &f.y.samples, &f.z.samples};

  std::vector<double> projected(n, 0.0);
  std::vector<double> residual(n, 0.0);
  const std::size_t n_blocks = n / block;  // trailing remainder joins the last block
  Eigen::Vector3d previous_dir = Eigen::Vector3d::Zero();
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const std::size_t lo = b * block;
    const std::size_t hi = b + 1 == n_blocks ? n : lo + block;
    Eigen::Matrix3d moment = Eigen::Matrix3d::Zero();
    for (std::size_t i = lo; i < hi; ++i) {
      const Eigen::Vector3d v((*axes[0])[i], (*axes[1])[i], (*axes[2])[i]);
      moment.noalias() += v * v.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(moment);
    Eigen::Vector3d dir = solver.eigenvectors().col(2);
    if (b == 0) {
      Eigen::Index largest = 0;
      dir.cwiseAbs().maxCoeff(&largest);
      if (dir(largest) < 0) dir = -dir;
    } else if (dir.dot(previous_dir) < 0) {
      dir = -dir;
    }
    previous_dir = dir;
    for (std::size_t i = lo; i < hi; ++i) {
      const Eigen::Vector3d v((*axes[0])[i], (*axes[1])[i], (*axes[2])[i]);
      const double p = dir.dot(v);
      projected[i] = p;
      residual[i] = (v - p * dir).norm();
    }
  }

  RespiratoryTraces traces;
  traces.projected = like(accel.x, rate, "g");
  traces.envelope = like(accel.x, kProbabilityRateHz, "g");
  traces.effort = like(accel.x, kProbabilityRateHz, "g");
  traces.envelope.samples = moving_rms(projected, rate, kProbabilityRateHz, kEnvelopeWindowS);
  traces.effort.samples = moving_rms(residual, rate, kProbabilityRateHz, kEnvelopeWindowS);
  traces.projected.samples = std::move(projected);
  return traces;
}

TimeSeries resp_envelope(const TriaxialSeries& accel) { return respiratory_traces(accel).envelope; }

Probabilities derive_probabilities(const TimeSeries& projected, const TimeSeries* audio) {
  validate(projected, "projected");
  require_rate(projected, kAccelRateHz, "derive_probabilities");
  const std::size_t n_out = derived_count(projected.size(), projected.rate_hz, kProbabilityRateHz);

  // Decimate to 10 Hz by block averaging; the trace is already low-passed at 1 Hz.
  const auto factor = static_cast<std::size_t>(kAccelRateHz / kBreathingDecimatedHz);
  std::vector<double> d(projected.size() / factor, 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < factor; ++j) s += projected.samples[i * factor + j];
    d[i] = s / static_cast<double>(factor);
  }

  Probabilities out;
  out.breathing = like(projected, kProbabilityRateHz, "probability");
  out.breathing.samples.assign(n_out, 0.0);
  const std::size_t len = std::min<std::size_t>(d.size(),
                                                static_cast<std::size_t>(kBreathingWindowS * kBreathingDecimatedHz));
  if (len >= 4) {
    const double df = kBreathingDecimatedHz / static_cast<double>(len);
    const auto bin_lo = static_cast<std::size_t>(std::ceil(0.05 / df));
    const auto bin_hi = std::min(static_cast<std::size_t>(std::floor(2.0 / df)), len / 2);
    std::vector<double> hann(len), cos_table(len), sin_table(len);
    for (std::size_t i = 0; i < len; ++i) {
      const double phase = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(len);
      hann[i] = 0.5 - 0.5 * std::cos(phase);
      cos_table[i] = std::cos(phase);
      sin_table[i] = std::sin(phase);
    }
    std::vector<double> frame(len);
    for (std::size_t k = 0; k < n_out; ++k) {
      const auto center = static_cast<long long>(
          std::llround(static_cast<double>(k) * kBreathingDecimatedHz / kProbabilityRateHz));
      long long lo = center - static_cast<long long>(len / 2);
      lo = std::clamp(lo, 0LL, static_cast<long long>(d.size() - len));
      double mean = 0.0;
      for (std::size_t i = 0; i < len; ++i) mean += d[static_cast<std::size_t>(lo) + i];
      mean /= static_cast<double>(len);
      for (std::size_t i = 0; i < len; ++i) frame[i] = (d[static_cast<std::size_t>(lo) + i] - mean) * hann[i];
      double in_band = 0.0, total = 0.0;
      for (std::size_t bin = bin_lo; bin <= bin_hi; ++bin) {
        double re = 0.0, im = 0.0;
        std::size_t idx = 0;
        for (std::size_t i = 0; i < len; ++i) {
          re += frame[i] * cos_table[idx];
          im -= frame[i] * sin_table[idx];
          idx += bin;
          if (idx >= len) idx -= len;
        }
        const double power = re * re + im * im;
        const double freq = static_cast<double>(bin) * df;
        total += power;
        if (freq >= 0.1 && freq <= 0.5) in_band += power;
      }
      out.breathing.samples[k] = total > 0.0 ? in_band / total : 0.0;
    }
  }
  out.breathing = quantize(out.breathing, kProbabilityResolution);

  out.snore = like(projected, kProbabilityRateHz, "probability");
  out.snore.samples.assign(n_out, 0.0);
  if (audio == nullptr || audio->samples.empty()) {
    out.snore_missing = true;
  } else {
    require_rate(*audio, kAudioRateHz, "snore probability");
    const TimeSeries band = bandpass(*audio, kSnoreLoHz, kSnoreHiHz);
    const auto frame = static_cast<std::size_t>(kAudioRateHz / kProbabilityRateHz);
    for (std::size_t k = 0; k < n_out && (k + 1) * frame <= audio->size(); ++k) {
      double e_band = 0.0, e_full = 0.0;
      for (std::size_t i = k * frame; i < (k + 1) * frame; ++i) {
        e_band += band.samples[i] * band.samples[i];
        e_full += audio->samples[i] * audio->samples[i];
      }
      out.snore.samples[k] = e_full > 0.0 ? squash_ratio(std::min(1.0, e_band / e_full)) : 0.0;
    }
  }
  out.snore = quantize(out.snore, kProbabilityResolution);
  return out;
}

Recording derive_channels(const Recording& recording, const DeriveOptions& options) {
  Recording out = recording;
  const TriaxialSeries accel = recording.triaxial("accel");
  if (options.filtered_accel) {
    TriaxialSeries f = bandpass(accel, kRespBandLoHz, kRespBandHiHz);
    f.x = quantize(f.x, kAccelResolution);
    f.y = quantize(f.y, kAccelResolution);
    f.z = quantize(f.z, kAccelResolution);
    out.put_triaxial("accel_bp", std::move(f));
  }
  out.channels["activity"] = activity(accel);
  const TimeSeries* audio = recording.has("audio") ? &recording.at("audio") : nullptr;
  if (audio) out.channels["audio_power"] = audio_power(*audio);
  RespiratoryTraces traces = respiratory_traces(accel);
  if (options.probabilities) {
    Probabilities p = derive_probabilities(traces.projected, audio);
    out.channels["breathing_prob"] = std::move(p.breathing);
    out.channels["snore_prob"] = std::move(p.snore);
  }
  out.channels["resp_env"] = std::move(traces.envelope);
  out.channels["effort_env"] = std::move(traces.effort);
  out.channels["position"] = position(accel).as_series();
  return out;
}

}  // namespace somno::dsp
