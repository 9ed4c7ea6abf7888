#pragma once

// Core domain types shared by every stage of the pipeline: uniformly sampled
// channels, respiratory events, wake/sleep hypnograms, patient records and
// cohorts. Values are constructed once and then treated as immutable.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace somno {

/// A uniformly sampled channel.
struct TimeSeries {
  double rate_hz = 1.0;
  double start_s = 0.0;
  std::vector<double> samples;
  std::string units;
  std::optional<double> resolution;

  std::size_t size() const { return samples.size(); }
  double duration_s() const { return static_cast<double>(samples.size()) / rate_hz; }
  double end_s() const { return start_s + duration_s(); }
  double time_of(std::size_t i) const { return start_s + static_cast<double>(i) / rate_hz; }
};

/// Checks rate, finiteness and (when set) quantization; throws InputError.
void validate(const TimeSeries& series, std::string_view name = "series");

/// Three rate- and length-aligned axes in the phone frame:
/// x = phone right, y = phone top (toward chin), z = out of screen.
struct TriaxialSeries {
  TimeSeries x, y, z;

  double rate_hz() const { return x.rate_hz; }
  double start_s() const { return x.start_s; }
  std::size_t size() const { return x.size(); }
};

void validate(const TriaxialSeries& series, std::string_view name = "triaxial");

enum class EventType {
  obstructive_apnea,
  central_apnea,
  mixed_apnea,
  obstructive_hypopnea,
  central_hypopnea,
  hypopnea_unspecified,
  rera,
  wake,
  arousal,
};

std::string_view to_string(EventType kind);
/// Throws InputError("unknown event type: ...") for any other label.
EventType parse_event_type(std::string_view label);

bool is_apnea(EventType kind);
bool is_hypopnea(EventType kind);
/// Apneas and hypopneas of every subtype. RERAs are not counted.
inline bool counts_toward_ahi(EventType kind) { return is_apnea(kind) || is_hypopnea(kind); }

struct RespEvent {
  EventType kind = EventType::obstructive_apnea;
  double start_s = 0.0;
  double end_s = 0.0;

  double duration_s() const { return end_s - start_s; }
  friend bool operator==(const RespEvent&, const RespEvent&) = default;
};

/// Throws InputError when end <= start or an arousal violates 3 <= duration < 30.
void validate(const RespEvent& event);

enum class EpochLabel : unsigned char { wake, sleep };

/// Wake/sleep labels on fixed 30 s epochs.
struct Hypnogram {
  static constexpr double epoch_s = 30.0;

  double start_s = 0.0;
  std::vector<EpochLabel> labels;

  std::size_t sleep_epochs() const;
  double total_sleep_s() const { return epoch_s * static_cast<double>(sleep_epochs()); }
  double end_s() const { return start_s + epoch_s * static_cast<double>(labels.size()); }
  /// Seconds of [begin_s, end_s) covered by sleep epochs.
  double sleep_overlap_s(double begin_s, double end_s) const;

  friend bool operator==(const Hypnogram&, const Hypnogram&) = default;
};

enum class SeverityClass { normal, mild, moderate, severe };

std::string_view to_string(SeverityClass severity);

/// [0,5) normal, [5,15) mild, [15,30] moderate, (30,inf) severe.
SeverityClass severity_of(double ahi);

/// Rounds every sample to the nearest multiple of `resolution` (half away
/// from zero) and records the resolution on the result.
TimeSeries quantize(const TimeSeries& series, double resolution);
double quantize_value(double value, double resolution);

/// Raw and derived channels of one recording, keyed by channel name.
/// Triaxial channels are stored as "<prefix>.x", "<prefix>.y", "<prefix>.z".
struct Recording {
  std::map<std::string, TimeSeries> channels;

  bool has(const std::string& name) const { return channels.count(name) != 0; }
  const TimeSeries& at(const std::string& name) const;
  bool has_triaxial(const std::string& prefix) const;
  /// Assembles and validates a triaxial channel; throws InputError when absent.
  TriaxialSeries triaxial(const std::string& prefix) const;
  void put_triaxial(const std::string& prefix, TriaxialSeries series);
};

struct PatientRecord {
  std::string id;
  std::optional<Recording> recording;
  std::map<std::string, Hypnogram> hypnograms;
  std::map<std::string, std::vector<RespEvent>> annotations;
  std::map<std::string, double> ahi;
};

/// Body position, one label per 30 s window. The numeric value is the code
/// used when the track is stored as a channel.
enum class PositionLabel : int { left = 0, right = 1, supine = 2, prone = 3, upright = 4 };

std::string_view to_string(PositionLabel position);
inline constexpr std::string_view kPositionCodeNames[] = {"left", "right", "supine", "prone",
                                                          "upright"};

struct Cohort {
  std::vector<PatientRecord> patients;
  std::string reference_source;
  std::string candidate_source;
};

/// Throws InputError unless every patient carries both sources' AHI.
void validate(const Cohort& cohort);

}  // namespace somno
