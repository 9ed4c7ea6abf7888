#pragma once

// Agreement statistics between a candidate and a reference AHI/annotation
// source: sensitivity/PPV at AHI thresholds, ROC/PR areas, PPV-tuned cutoffs,
// ICC(2,1), Pearson, Bland-Altman, severity confusion and event-level
// segmentation metrics, with patient-level percentile bootstrap intervals.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "somno/errors.hpp"
#include "somno/model.hpp"

namespace somno::eval {

/// A metric whose denominator may vanish; nullopt is the undefined marker.
using Metric = std::optional<double>;

struct PatientAhi {
  std::string id;
  double ref = 0.0;
  double cand = 0.0;

  friend bool operator==(const PatientAhi&, const PatientAhi&) = default;
};

/// Throws InputError on duplicate ids or negative/non-finite values.
void validate(std::span<const PatientAhi> pairs);

struct BinaryMetrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  Metric sensitivity, ppv, specificity, npv;

  friend bool operator==(const BinaryMetrics&, const BinaryMetrics&) = default;
};

/// Positive means AHI >= threshold on both sides.
BinaryMetrics binary_metrics(std::span<const PatientAhi> pairs, double threshold);
/// Reference positive at ref >= t_ref, candidate positive at cand >= cand_cutoff.
BinaryMetrics binary_metrics(std::span<const PatientAhi> pairs, double t_ref, double cand_cutoff);

// ---------------------------------------------------------------------------
// Bootstrap

struct BootstrapOptions {
  std::size_t n_resamples = 10000;
  std::uint64_t seed = 0;
  double level = 0.95;
};

struct Interval {
  Metric lo, hi;
  std::size_t n_valid = 0;
  std::size_t n_undefined = 0;

  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Seed of the substream used by resample `index`; independent of the order
/// in which resamples are drawn.
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index);

/// Patient indices of resample `index` (n draws with replacement).
std::vector<std::size_t> resample_indices(std::size_t n, std::uint64_t seed, std::uint64_t index);

/// Linear-interpolation percentile interval of `values` at the given level.
Interval percentile_interval(std::vector<double> values, double level, std::size_t n_undefined);

/// Percentile bootstrap of `stat` over patients. `stat` maps a resampled
/// span of items to a Metric; undefined resamples are counted and dropped.
template <typename T, typename Stat>
Interval bootstrap_ci(std::span<const T> items, Stat&& stat, const BootstrapOptions& options) {
  if (items.empty()) throw ComputeError("empty cohort");
  if (options.n_resamples == 0) throw InputError("bootstrap needs at least one resample");
  if (!(options.level > 0.0 && options.level < 1.0)) throw InputError("bootstrap level must lie in (0, 1)");
  std::vector<double> values;
  values.reserve(options.n_resamples);
  std::size_t undefined = 0;
  std::vector<T> sample;
  sample.reserve(items.size());
  for (std::size_t r = 0; r < options.n_resamples; ++r) {
    sample.clear();
    for (std::size_t i : resample_indices(items.size(), options.seed, r)) sample.push_back(items[i]);
    const Metric v = stat(std::span<const T>(sample));
    if (v && std::isfinite(*v)) {
      values.push_back(*v);
    } else {
      ++undefined;
    }
  }
  return percentile_interval(std::move(values), options.level, undefined);
}

// ---------------------------------------------------------------------------
// Threshold sweeps

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
  double threshold = 0.0;  // candidate cutoff producing this point (+inf at the origin)

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct AucCurves {
  double auc_roc = 0.0;
  double auc_pr = 0.0;
  std::vector<CurvePoint> roc;  // (false positive rate, true positive rate)
  std::vector<CurvePoint> pr;   // (recall, precision)

  friend bool operator==(const AucCurves&, const AucCurves&) = default;
};

/// Labels from ref >= t_ref, scores from the candidate AHI. Tied scores form
/// one step; ROC area is trapezoidal and PR area is average precision.
/// Throws ComputeError when only one class is present.
AucCurves auc_curves(std::span<const PatientAhi> pairs, double t_ref);

struct TunedThreshold {
  double target_ppv = 0.0;
  double tau = 0.0;
  Metric sensitivity;
  double ppv = 0.0;
};

/// Smallest observed candidate value tau with PPV(cand >= tau) >= target.
/// Throws ComputeError("... unachievable") when no cutoff reaches the target.
TunedThreshold min_threshold_for_ppv(std::span<const PatientAhi> pairs, double t_ref, double target_ppv);

// ---------------------------------------------------------------------------
// Agreement

struct IccResult {
  std::string form = "ICC(2,1)";
  double icc = 0.0;
  double p_value = 1.0;
  double f_statistic = 0.0;
  double df1 = 0.0;
  double df2 = 0.0;
  double ms_rows = 0.0;
  double ms_cols = 0.0;
  double ms_error = 0.0;

  friend bool operator==(const IccResult&, const IccResult&) = default;
};

/// Two-way random effects, absolute agreement, single measure, with the
/// p-value of F = MS_rows / MS_error on (n-1, n-1) degrees of freedom.
IccResult icc_2_1(std::span<const PatientAhi> pairs);

struct PearsonResult {
  double r = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;

  friend bool operator==(const PearsonResult&, const PearsonResult&) = default;
};

PearsonResult pearson(std::span<const PatientAhi> pairs);

struct BlandAltman {
  double bias = 0.0;
  double sd = 0.0;
  double loa_lo = 0.0;
  double loa_hi = 0.0;
  struct Point {
    double mean = 0.0;
    double diff = 0.0;
    friend bool operator==(const Point&, const Point&) = default;
  };
  std::vector<Point> points;

  friend bool operator==(const BlandAltman&, const BlandAltman&) = default;
};

/// Differences are candidate minus reference; limits are bias +- 1.96 sd.
BlandAltman bland_altman(std::span<const PatientAhi> pairs);

enum class SeverityBands {
  four,   // normal / mild / moderate / severe
  three,  // < 5, 5-15, >= 15
};

struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<std::size_t>> counts;  // [reference class][candidate class]

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

std::size_t severity_band(double ahi, SeverityBands bands);
std::vector<std::string> band_labels(SeverityBands bands);
ConfusionMatrix severity_confusion(std::span<const PatientAhi> pairs, SeverityBands bands);

// ---------------------------------------------------------------------------
// Event-level segmentation

struct EventMatchOptions {
  double min_overlap_s = 3.0;
  double margin_s = 20.0;
  bool one_to_one = false;
};

struct EventMatch {
  std::size_t n_pred = 0;
  std::size_t n_ref = 0;
  std::size_t tp_pred = 0;
  std::size_t detected_ref = 0;
  Metric ppv;
  Metric sensitivity;

  friend bool operator==(const EventMatch&, const EventMatch&) = default;
};

/// Only apnea/hypopnea events take part. Each reference event is widened by
/// the margin on both sides; a prediction is a true positive when it overlaps
/// some widened reference by at least min_overlap_s, and a reference is
/// detected when some prediction overlaps its widened interval that much.
EventMatch event_match(std::span<const RespEvent> pred, std::span<const RespEvent> ref,
                       const EventMatchOptions& options = {});

// ---------------------------------------------------------------------------
// Cohort report

struct TunedResult {
  double target_ppv = 0.0;
  std::optional<double> tau;
  Metric sensitivity, ppv;
  Interval ci_sensitivity, ci_ppv;
  std::string note;

  friend bool operator==(const TunedResult&, const TunedResult&) = default;
};

struct ThresholdReport {
  double threshold = 0.0;
  BinaryMetrics metrics;
  Interval ci_sensitivity, ci_ppv;
  std::optional<AucCurves> auc;
  Interval ci_auc_roc, ci_auc_pr;
  std::vector<TunedResult> tuned;
  std::string note;

  friend bool operator==(const ThresholdReport&, const ThresholdReport&) = default;
};

struct EventLevelReport {
  std::size_t patients = 0;
  std::size_t n_pred = 0, n_ref = 0, tp_pred = 0, detected_ref = 0;
  Metric ppv, sensitivity;
  Interval ci_ppv, ci_sensitivity;
  double min_overlap_s = 3.0;
  double margin_s = 20.0;
  bool one_to_one = false;

  friend bool operator==(const EventLevelReport&, const EventLevelReport&) = default;
};

inline constexpr const char* kReportSchema = "somno.eval_report/1";

struct EvalReport {
  std::string schema_version = kReportSchema;
  std::string reference_source;
  std::string candidate_source;
  std::uint64_t seed = 0;
  std::size_t n_resamples = 0;
  double level = 0.95;
  std::vector<PatientAhi> pairs;
  std::vector<ThresholdReport> thresholds;
  std::optional<IccResult> icc;
  std::optional<PearsonResult> pearson;
  std::string correlation_note;
  std::optional<BlandAltman> bland_altman;
  std::string bands = "four";
  ConfusionMatrix confusion;
  std::optional<EventLevelReport> events;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct EvalOptions {
  std::vector<double> thresholds = {15.0, 30.0};
  std::vector<double> target_ppvs = {0.9, 0.95};
  BootstrapOptions bootstrap;
  SeverityBands bands = SeverityBands::four;
  EventMatchOptions events;
};

/// Paired AHI values of the cohort's reference and candidate sources.
std::vector<PatientAhi> paired_ahis(const Cohort& cohort);

/// Runs the full battery. Undefined quantities (single-class thresholds,
/// n < 3 correlations, unreachable PPV targets) are reported as markers with
/// a note rather than failing the run.
EvalReport evaluate_cohort(const Cohort& cohort, const EvalOptions& options);

// ---------------------------------------------------------------------------
// Cohort manifests

struct CohortEntry {
  std::filesystem::path patient_dir;
  std::string reference_source;
  std::string candidate_source;
  std::string reference_hypnogram;  // defaults to reference_source
  std::string candidate_hypnogram;  // defaults to candidate_source, then the reference hypnogram
};

std::vector<CohortEntry> read_cohort_manifest(const std::filesystem::path& manifest_path);

/// Loads annotations and hypnograms of every entry and derives both AHIs.
Cohort load_cohort(const std::filesystem::path& manifest_path);

}  // namespace somno::eval
