#include "somno/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include "somno/errors.hpp"

namespace somno {

namespace {

constexpr std::array<std::pair<EventType, std::string_view>, 9> kEventNames = {{
    {EventType::obstructive_apnea, "obstructive_apnea"},
    {EventType::central_apnea, "central_apnea"},
    {EventType::mixed_apnea, "mixed_apnea"},
    {EventType::obstructive_hypopnea, "obstructive_hypopnea"},
    {EventType::central_hypopnea, "central_hypopnea"},
    {EventType::hypopnea_unspecified, "hypopnea_unspecified"},
    {EventType::rera, "rera"},
    {EventType::wake, "wake"},
    {EventType::arousal, "arousal"},
}};

std::string named(std::string_view name, std::string_view what) {
  return std::string(name) + ": " + std::string(what);
}

}  // namespace

void validate(const TimeSeries& series, std::string_view name) {
  if (!(series.rate_hz > 0.0) || !std::isfinite(series.rate_hz))
    throw InputError(named(name, "rate_hz must be positive"));
  if (!std::isfinite(series.start_s)) throw InputError(named(name, "start_s must be finite"));
  for (double v : series.samples) {
    if (!std::isfinite(v)) throw InputError(named(name, "non-finite sample"));
  }
  if (series.resolution) {
    const double r = *series.resolution;
    if (!(r > 0.0) || !std::isfinite(r)) throw InputError(named(name, "resolution must be positive"));
    for (double v : series.samples) {
      const double k = std::round(v / r);
      if (std::abs(k * r - v) > 1e-9 * std::max(std::abs(v), r))
        throw InputError(named(name, "sample is not a multiple of the declared resolution"));
    }
  }
}

void validate(const TriaxialSeries& series, std::string_view name) {
  validate(series.x, std::string(name) + ".x");
  validate(series.y, std::string(name) + ".y");
  validate(series.z, std::string(name) + ".z");
  for (const TimeSeries* axis : {&series.y, &series.z}) {
    if (axis->rate_hz != series.x.rate_hz || axis->start_s != series.x.start_s ||
        axis->size() != series.x.size())
      throw InputError(named(name, "axes are not rate/length aligned"));
  }
}

std::string_view to_string(EventType kind) {
  for (const auto& [k, label] : kEventNames) {
    if (k == kind) return label;
  }
  return "unknown";
}

EventType parse_event_type(std::string_view label) {
  for (const auto& [k, name] : kEventNames) {
    if (name == label) return k;
  }
  throw InputError("unknown event type: " + std::string(label));
}

bool is_apnea(EventType kind) {
  return kind == EventType::obstructive_apnea || kind == EventType::central_apnea ||
         kind == EventType::mixed_apnea;
}

bool is_hypopnea(EventType kind) {
  return kind == EventType::obstructive_hypopnea || kind == EventType::central_hypopnea ||
         kind == EventType::hypopnea_unspecified;
}

void validate(const RespEvent& event) {
  if (!std::isfinite(event.start_s) || !std::isfinite(event.end_s))
    throw InputError("event bounds must be finite");
  if (!(event.end_s > event.start_s)) throw InputError("event end_s must exceed start_s");
  if (event.kind == EventType::arousal) {
    const double d = event.duration_s();
    if (d < 3.0 || d >= 30.0) throw InputError("arousal duration must lie in [3, 30) s");
  }
}

std::size_t Hypnogram::sleep_epochs() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), EpochLabel::sleep));
}

double Hypnogram::sleep_overlap_s(double begin_s, double end_s) const {
  if (!(end_s > begin_s) || labels.empty()) return 0.0;
  const double first = std::floor((begin_s - start_s) / epoch_s);
  const double last = std::floor((end_s - start_s) / epoch_s);
  const auto lo = static_cast<long long>(std::max(first, 0.0));
  const auto hi = static_cast<long long>(
      std::min(last, static_cast<double>(labels.size()) - 1.0));
  double total = 0.0;
  for (long long e = lo; e <= hi; ++e) {
    if (labels[static_cast<std::size_t>(e)] != EpochLabel::sleep) continue;
    const double a = start_s + epoch_s * static_cast<double>(e);
    const double b = a + epoch_s;
    total += std::max(0.0, std::min(b, end_s) - std::max(a, begin_s));
  }
  return total;
}

std::string_view to_string(SeverityClass severity) {
  switch (severity) {
    case SeverityClass::normal: return "normal";
    case SeverityClass::mild: return "mild";
    case SeverityClass::moderate: return "moderate";
    case SeverityClass::severe: return "severe";
  }
  return "unknown";
}

SeverityClass severity_of(double ahi) {
  if (!std::isfinite(ahi) || ahi < 0.0) throw InputError("AHI must be finite and non-negative");
  if (ahi < 5.0) return SeverityClass::normal;
  if (ahi < 15.0) return SeverityClass::mild;
  if (ahi <= 30.0) return SeverityClass::moderate;
  return SeverityClass::severe;
}

double quantize_value(double value, double resolution) {
  // std::round already rounds half away from zero.
  return resolution * std::round(value / resolution);
}

TimeSeries quantize(const TimeSeries& series, double resolution) {
  if (!(resolution > 0.0) || !std::isfinite(resolution))
    throw InputError("quantization resolution must be positive");
  TimeSeries out = series;
  for (double& v : out.samples) v = quantize_value(v, resolution);
  out.resolution = resolution;
  return out;
}

std::string_view to_string(PositionLabel position) {
  const auto code = static_cast<int>(position);
  if (code < 0 || code > 4) return "unknown";
  return kPositionCodeNames[code];
}

const TimeSeries& Recording::at(const std::string& name) const {
  auto it = channels.find(name);
  if (it == channels.end()) throw InputError("missing channel: " + name);
  return it->second;
}

bool Recording::has_triaxial(const std::string& prefix) const {
  return has(prefix + ".x") && has(prefix + ".y") && has(prefix + ".z");
}

TriaxialSeries Recording::triaxial(const std::string& prefix) const {
  TriaxialSeries t{at(prefix + ".x"), at(prefix + ".y"), at(prefix + ".z")};
  validate(t, prefix);
  return t;
}

void Recording::put_triaxial(const std::string& prefix, TriaxialSeries series) {
  channels[prefix + ".x"] = std::move(series.x);
  channels[prefix + ".y"] = std::move(series.y);
  channels[prefix + ".z"] = std::move(series.z);
}

void validate(const Cohort& cohort) {
  for (const auto& p : cohort.patients) {
    for (const std::string* source : {&cohort.reference_source, &cohort.candidate_source}) {
      if (!p.ahi.count(*source))
        throw InputError("patient " + p.id + " lacks AHI for source " + *source);
    }
  }
}

}  // namespace somno
