#include "somno/eval.hpp"

#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "somno/detect.hpp"
#include "somno/ingest.hpp"
#include "somno/special.hpp"

namespace somno::eval {

namespace {

Metric ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double overlap(double a0, double a1, double b0, double b1) { return std::min(a1, b1) - std::max(a0, b0); }

std::vector<RespEvent> scored_only(std::span<const RespEvent> events) {
  std::vector<RespEvent> out;
  for (const auto& e : events) {
    if (counts_toward_ahi(e.kind)) out.push_back(e);
  }
  return out;
}

struct PatientEventCounts {
  std::size_t n_pred = 0, n_ref = 0, tp_pred = 0, detected_ref = 0;
};

PatientEventCounts pooled(std::span<const PatientEventCounts> items) {
  PatientEventCounts sum;
  for (const auto& c : items) {
    sum.n_pred += c.n_pred;
    sum.n_ref += c.n_ref;
    sum.tp_pred += c.tp_pred;
    sum.detected_ref += c.detected_ref;
  }
  return sum;
}

}  // namespace

void validate(std::span<const PatientAhi> pairs) {
  std::set<std::string> ids;
  for (const auto& p : pairs) {
    if (!ids.insert(p.id).second) throw InputError("duplicate patient id: " + p.id);
    for (double v : {p.ref, p.cand}) {
      if (!std::isfinite(v) || v < 0.0) throw InputError("AHI values must be finite and non-negative");
    }
  }
}

BinaryMetrics binary_metrics(std::span<const PatientAhi> pairs, double threshold) {
  return binary_metrics(pairs, threshold, threshold);
}

BinaryMetrics binary_metrics(std::span<const PatientAhi> pairs, double t_ref, double cand_cutoff) {
  if (pairs.empty()) throw ComputeError("empty cohort");
  BinaryMetrics m;
  for (const auto& p : pairs) {
    const bool truth = p.ref >= t_ref;
    const bool predicted = p.cand >= cand_cutoff;
    if (truth && predicted) ++m.tp;
    if (!truth && predicted) ++m.fp;
    if (truth && !predicted) ++m.fn;
    if (!truth && !predicted) ++m.tn;
  }
  m.sensitivity = ratio(m.tp, m.tp + m.fn);
  m.ppv = ratio(m.tp, m.tp + m.fp);
  m.specificity = ratio(m.tn, m.tn + m.fp);
  m.npv = ratio(m.tn, m.tn + m.fn);
  return m;
}

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index));
}

std::vector<std::size_t> resample_indices(std::size_t n, std::uint64_t seed, std::uint64_t index) {
  std::mt19937_64 gen(substream_seed(seed, index));
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = pick(gen);
  return out;
}

Interval percentile_interval(std::vector<double> values, double level, std::size_t n_undefined) {
  Interval out;
  out.n_valid = values.size();
  out.n_undefined = n_undefined;
  if (values.empty()) return out;
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double h = (static_cast<double>(values.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = h - static_cast<double>(lo);
    // Equal neighbours return the value itself so degenerate samples give
    // zero-width intervals exactly.
    return values[lo] == values[hi] ? values[lo] : values[lo] + frac * (values[hi] - values[lo]);
  };
  const double alpha = (1.0 - level) / 2.0;
  out.lo = quantile(alpha);
  out.hi = quantile(1.0 - alpha);
  return out;
}

AucCurves auc_curves(std::span<const PatientAhi> pairs, double t_ref) {
  std::size_t n_pos = 0;
  for (const auto& p : pairs) n_pos += p.ref >= t_ref ? 1 : 0;
  const std::size_t n_neg = pairs.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ComputeError("single-class cohort at AHI threshold " + std::to_string(t_ref));

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pairs[a].cand > pairs[b].cand; });

  AucCurves out;
  const double P = static_cast<double>(n_pos), N = static_cast<double>(n_neg);
  out.roc.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double score = pairs[order[i]].cand;
    while (i < order.size() && pairs[order[i]].cand == score) {
      if (pairs[order[i]].ref >= t_ref) {
        ++tp;
      } else {
        ++fp;
      }
      ++i;
    }
    const CurvePoint& last = out.roc.back();
    const CurvePoint next{static_cast<double>(fp) / N, static_cast<double>(tp) / P, score};
    out.auc_roc += (next.x - last.x) * (next.y + last.y) / 2.0;
    out.roc.push_back(next);
    const double recall = static_cast<double>(tp) / P;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    out.auc_pr += (recall - prev_recall) * precision;
    prev_recall = recall;
    out.pr.push_back({recall, precision, score});
  }
  return out;
}

TunedThreshold min_threshold_for_ppv(std::span<const PatientAhi> pairs, double t_ref, double target_ppv) {
  if (pairs.empty()) throw ComputeError("empty cohort");
  std::vector<double> cutoffs;
  for (const auto& p : pairs) cutoffs.push_back(p.cand);
  std::sort(cutoffs.begin(), cutoffs.end());
  cutoffs.erase(std::unique(cutoffs.begin(), cutoffs.end()), cutoffs.end());

  // Counts of cand >= cutoff for every distinct cutoff, from the top down.
  std::vector<std::pair<double, bool>> by_score;
  for (const auto& p : pairs) by_score.emplace_back(p.cand, p.ref >= t_ref);
  std::sort(by_score.begin(), by_score.end());
  std::vector<std::size_t> tp_at(cutoffs.size()), fp_at(cutoffs.size());
  std::size_t tp = 0, fp = 0;
  auto it = by_score.rbegin();
  for (std::size_t c = cutoffs.size(); c-- > 0;) {
    while (it != by_score.rend() && it->first >= cutoffs[c]) {
      (it->second ? tp : fp) += 1;
      ++it;
    }
    tp_at[c] = tp;
    fp_at[c] = fp;
  }
  for (std::size_t c = 0; c < cutoffs.size(); ++c) {
    const double ppv = static_cast<double>(tp_at[c]) / static_cast<double>(tp_at[c] + fp_at[c]);
    if (ppv >= target_ppv) {
      TunedThreshold t;
      t.target_ppv = target_ppv;
      t.tau = cutoffs[c];
      t.ppv = ppv;
      t.sensitivity = binary_metrics(pairs, t_ref, cutoffs[c]).sensitivity;
      return t;
    }
  }
  throw ComputeError("target PPV " + std::to_string(target_ppv) + " unachievable at any cutoff");
}

IccResult icc_2_1(std::span<const PatientAhi> pairs) {
  const std::size_t n = pairs.size();
  if (n < 3) throw ComputeError("ICC requires at least 3 patients");
  constexpr double k = 2.0;
  const double nd = static_cast<double>(n);
  double grand = 0.0, col_ref = 0.0, col_cand = 0.0;
  for (const auto& p : pairs) {
    col_ref += p.ref;
    col_cand += p.cand;
  }
  grand = (col_ref + col_cand) / (k * nd);
  col_ref /= nd;
  col_cand /= nd;
  double ss_total = 0.0, ss_rows = 0.0;
  for (const auto& p : pairs) {
    const double row = (p.ref + p.cand) / k;
    ss_rows += k * (row - grand) * (row - grand);
    ss_total += (p.ref - grand) * (p.ref - grand) + (p.cand - grand) * (p.cand - grand);
  }
  if (!(ss_total > 0.0)) throw ComputeError("ICC undefined: zero total variance");
  const double ss_cols = nd * ((col_ref - grand) * (col_ref - grand) + (col_cand - grand) * (col_cand - grand));
  const double ss_error = std::max(0.0, ss_total - ss_rows - ss_cols);

  IccResult r;
  r.df1 = nd - 1.0;
  r.df2 = (nd - 1.0) * (k - 1.0);
  r.ms_rows = ss_rows / r.df1;
  r.ms_cols = ss_cols / (k - 1.0);
  r.ms_error = ss_error / r.df2;
  r.icc = (r.ms_rows - r.ms_error) /
          (r.ms_rows + (k - 1.0) * r.ms_error + k * (r.ms_cols - r.ms_error) / nd);
  r.f_statistic = r.ms_error > 0.0 ? r.ms_rows / r.ms_error : std::numeric_limits<double>::infinity();
  r.p_value = special::f_upper_tail(r.f_statistic, r.df1, r.df2);
  return r;
}

PearsonResult pearson(std::span<const PatientAhi> pairs) {
  const std::size_t n = pairs.size();
  if (n < 3) throw ComputeError("Pearson correlation requires at least 3 patients");
  double mx = 0.0, my = 0.0;
  for (const auto& p : pairs) {
    mx += p.ref;
    my += p.cand;
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (const auto& p : pairs) {
    sxx += (p.ref - mx) * (p.ref - mx);
    syy += (p.cand - my) * (p.cand - my);
    sxy += (p.ref - mx) * (p.cand - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw ComputeError("Pearson correlation undefined: constant input");
  PearsonResult out;
  out.n = n;
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(n) - 2.0;
  const double one_minus = 1.0 - out.r * out.r;
  out.p_value = one_minus > 0.0 ? special::t_two_sided(out.r * std::sqrt(df / one_minus), df)
                                : special::kMinPValue;
  return out;
}

BlandAltman bland_altman(std::span<const PatientAhi> pairs) {
  const std::size_t n = pairs.size();
  if (n < 2) throw ComputeError("Bland-Altman requires at least 2 patients");
  BlandAltman out;
  for (const auto& p : pairs) {
    out.points.push_back({(p.ref + p.cand) / 2.0, p.cand - p.ref});
    out.bias += p.cand - p.ref;
  }
  out.bias /= static_cast<double>(n);
  double ss = 0.0;
  for (const auto& pt : out.points) ss += (pt.diff - out.bias) * (pt.diff - out.bias);
  out.sd = std::sqrt(ss / static_cast<double>(n - 1));
  out.loa_lo = out.bias - 1.96 * out.sd;
  out.loa_hi = out.bias + 1.96 * out.sd;
  return out;
}

std::size_t severity_band(double ahi, SeverityBands bands) {
  if (bands == SeverityBands::four) return static_cast<std::size_t>(severity_of(ahi));
  if (!std::isfinite(ahi) || ahi < 0.0) throw InputError("AHI must be finite and non-negative");
  if (ahi < 5.0) return 0;
  if (ahi < 15.0) return 1;
  return 2;
}

std::vector<std::string> band_labels(SeverityBands bands) {
  if (bands == SeverityBands::four) return {"normal", "mild", "moderate", "severe"};
  return {"<5", "5-15", ">=15"};
}

ConfusionMatrix severity_confusion(std::span<const PatientAhi> pairs, SeverityBands bands) {
  if (pairs.empty()) throw ComputeError("empty cohort");
  ConfusionMatrix m;
  m.labels = band_labels(bands);
  m.counts.assign(m.labels.size(), std::vector<std::size_t>(m.labels.size(), 0));
  for (const auto& p : pairs) ++m.counts[severity_band(p.ref, bands)][severity_band(p.cand, bands)];
  return m;
}

EventMatch event_match(std::span<const RespEvent> pred_in, std::span<const RespEvent> ref_in,
                       const EventMatchOptions& options) {
  const std::vector<RespEvent> pred = scored_only(pred_in);
  const std::vector<RespEvent> ref = scored_only(ref_in);

  struct Widened {
    double start, end;
    std::size_t index;
  };
  std::vector<Widened> wide;
  double max_len = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    wide.push_back({ref[i].start_s - options.margin_s, ref[i].end_s + options.margin_s, i});
    max_len = std::max(max_len, wide.back().end - wide.back().start);
  }
  std::sort(wide.begin(), wide.end(), [](const Widened& a, const Widened& b) { return a.start < b.start; });

  // Widened references that can overlap [s, e]: start in [s - max_len, e].
  auto candidates = [&](double s, double e) {
    auto lo = std::lower_bound(wide.begin(), wide.end(), s - max_len,
                               [](const Widened& w, double v) { return w.start < v; });
    auto hi = std::upper_bound(wide.begin(), wide.end(), e,
                               [](double v, const Widened& w) { return v < w.start; });
    return std::make_pair(lo, hi);
  };

  EventMatch out;
  out.n_pred = pred.size();
  out.n_ref = ref.size();
  std::vector<bool> detected(ref.size(), false);

  if (!options.one_to_one) {
    for (const auto& p : pred) {
      bool hit = false;
      auto [lo, hi] = candidates(p.start_s, p.end_s);
      for (auto it = lo; it != hi; ++it) {
        if (overlap(p.start_s, p.end_s, it->start, it->end) >= options.min_overlap_s) {
          hit = true;
          detected[it->index] = true;
        }
      }
      out.tp_pred += hit ? 1 : 0;
    }
  } else {
    std::vector<std::size_t> order(pred.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pred[a].start_s < pred[b].start_s; });
    for (std::size_t pi : order) {
      const auto& p = pred[pi];
      auto [lo, hi] = candidates(p.start_s, p.end_s);
      std::optional<std::size_t> best;
      double best_overlap = -std::numeric_limits<double>::infinity();
      for (auto it = lo; it != hi; ++it) {
        if (detected[it->index]) continue;
        const double ov = overlap(p.start_s, p.end_s, it->start, it->end);
        if (ov >= options.min_overlap_s && (ov > best_overlap || (ov == best_overlap && it->index < *best))) {
          best = it->index;
          best_overlap = ov;
        }
      }
      if (best) {
        detected[*best] = true;
        ++out.tp_pred;
      }
    }
  }
  out.detected_ref = static_cast<std::size_t>(std::count(detected.begin(), detected.end(), true));
  out.ppv = ratio(out.tp_pred, out.n_pred);
  out.sensitivity = ratio(out.detected_ref, out.n_ref);
  if (out.n_ref > 0 && out.n_pred == 0) out.sensitivity = 0.0;
  return out;
}

std::vector<PatientAhi> paired_ahis(const Cohort& cohort) {
  validate(cohort);
  std::vector<PatientAhi> pairs;
  for (const auto& p : cohort.patients) {
    pairs.push_back({p.id, p.ahi.at(cohort.reference_source), p.ahi.at(cohort.candidate_source)});
  }
  validate(pairs);
  return pairs;
}

EvalReport evaluate_cohort(const Cohort& cohort, const EvalOptions& options) {
  if (cohort.patients.empty()) throw ComputeError("empty cohort");
  const std::vector<PatientAhi> pairs = paired_ahis(cohort);
  const std::span<const PatientAhi> all(pairs);
  const BootstrapOptions& boot = options.bootstrap;

  EvalReport report;
  report.reference_source = cohort.reference_source;
  report.candidate_source = cohort.candidate_source;
  report.seed = boot.seed;
  report.n_resamples = boot.n_resamples;
  report.level = boot.level;
  report.pairs = pairs;

  for (double t : options.thresholds) {
    ThresholdReport tr;
    tr.threshold = t;
    tr.metrics = binary_metrics(all, t);
    tr.ci_sensitivity = bootstrap_ci(all, [t](auto s) { return binary_metrics(s, t).sensitivity; }, boot);
    tr.ci_ppv = bootstrap_ci(all, [t](auto s) { return binary_metrics(s, t).ppv; }, boot);
    try {
      tr.auc = auc_curves(all, t);
    } catch (const ComputeError& e) {
      tr.note = e.what();
    }
    if (tr.auc) {
      auto auc_of = [t](std::span<const PatientAhi> s, bool roc) -> Metric {
        try {
          const AucCurves c = auc_curves(s, t);
          return roc ? c.auc_roc : c.auc_pr;
        } catch (const ComputeError&) {
          return std::nullopt;
        }
      };
      tr.ci_auc_roc = bootstrap_ci(all, [&](auto s) { return auc_of(s, true); }, boot);
      tr.ci_auc_pr = bootstrap_ci(all, [&](auto s) { return auc_of(s, false); }, boot);
    }
    for (double target : options.target_ppvs) {
      TunedResult tuned;
      tuned.target_ppv = target;
      try {
        const TunedThreshold tt = min_threshold_for_ppv(all, t, target);
        tuned.tau = tt.tau;
        tuned.sensitivity = tt.sensitivity;
        tuned.ppv = tt.ppv;
        const double tau = tt.tau;
        tuned.ci_sensitivity =
            bootstrap_ci(all, [t, tau](auto s) { return binary_metrics(s, t, tau).sensitivity; }, boot);
        tuned.ci_ppv = bootstrap_ci(all, [t, tau](auto s) { return binary_metrics(s, t, tau).ppv; }, boot);
      } catch (const ComputeError& e) {
        tuned.note = e.what();
      }
      tr.tuned.push_back(std::move(tuned));
    }
    report.thresholds.push_back(std::move(tr));
  }

  try {
    report.icc = icc_2_1(all);
    report.pearson = pearson(all);
  } catch (const ComputeError& e) {
    report.correlation_note = e.what();
  }
  if (pairs.size() >= 2) report.bland_altman = bland_altman(all);
  report.bands = options.bands == SeverityBands::four ? "four" : "three";
  report.confusion = severity_confusion(all, options.bands);

  const bool have_events = std::all_of(cohort.patients.begin(), cohort.patients.end(), [&](const PatientRecord& p) {
    return p.annotations.count(cohort.reference_source) && p.annotations.count(cohort.candidate_source);
  });
  if (have_events) {
    std::vector<PatientEventCounts> counts;
    for (const auto& p : cohort.patients) {
      const EventMatch m = event_match(p.annotations.at(cohort.candidate_source),
                                       p.annotations.at(cohort.reference_source), options.events);
      counts.push_back({m.n_pred, m.n_ref, m.tp_pred, m.detected_ref});
    }
    const std::span<const PatientEventCounts> cs(counts);
    const PatientEventCounts total = pooled(cs);
    EventLevelReport ev;
    ev.patients = counts.size();
    ev.n_pred = total.n_pred;
    ev.n_ref = total.n_ref;
    ev.tp_pred = total.tp_pred;
    ev.detected_ref = total.detected_ref;
    ev.ppv = ratio(total.tp_pred, total.n_pred);
    ev.sensitivity = ratio(total.detected_ref, total.n_ref);
    ev.ci_ppv = bootstrap_ci(cs, [](auto s) { const auto c = pooled(s); return ratio(c.tp_pred, c.n_pred); }, boot);
    ev.ci_sensitivity =
        bootstrap_ci(cs, [](auto s) { const auto c = pooled(s); return ratio(c.detected_ref, c.n_ref); }, boot);
    ev.min_overlap_s = options.events.min_overlap_s;
    ev.margin_s = options.events.margin_s;
    ev.one_to_one = options.events.one_to_one;
    report.events = ev;
  }
  return report;
}

std::vector<CohortEntry> read_cohort_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw InputError("cannot open cohort manifest " + manifest_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed cohort manifest: " + std::string(e.what()));
  }
  if (!j.is_array()) throw InputError("cohort manifest must be a JSON list");
  std::vector<CohortEntry> entries;
  const auto base = manifest_path.parent_path();
  for (const auto& item : j) {
    try {
      CohortEntry e;
      e.patient_dir = item.at("patient_dir").get<std::string>();
      if (e.patient_dir.is_relative()) e.patient_dir = base / e.patient_dir;
      e.reference_source = item.at("reference_source").get<std::string>();
      e.candidate_source = item.at("candidate_source").get<std::string>();
      e.reference_hypnogram = item.value("reference_hypnogram", e.reference_source);
      e.candidate_hypnogram = item.value("candidate_hypnogram", e.candidate_source);
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw InputError("malformed cohort manifest entry: " + std::string(ex.what()));
    }
  }
  return entries;
}

Cohort load_cohort(const std::filesystem::path& manifest_path) {
  const std::vector<CohortEntry> entries = read_cohort_manifest(manifest_path);
  Cohort cohort;
  if (entries.empty()) return cohort;
  const bool uniform = std::all_of(entries.begin(), entries.end(), [&](const CohortEntry& e) {
    return e.reference_source == entries.front().reference_source &&
           e.candidate_source == entries.front().candidate_source;
  });
  cohort.reference_source = uniform ? entries.front().reference_source : "reference";
  cohort.candidate_source = uniform ? entries.front().candidate_source : "candidate";

  for (const auto& e : entries) {
    PatientRecord src = read_patient_dir(e.patient_dir, false);
    auto events_of = [&](const std::string& source) -> const std::vector<RespEvent>& {
      auto it = src.annotations.find(source);
      if (it == src.annotations.end())
        throw InputError("patient " + src.id + " has no annotations for source " + source);
      return it->second;
    };
    auto hypnogram_of = [&](const std::string& wanted, const std::string& fallback) -> const Hypnogram& {
      if (auto it = src.hypnograms.find(wanted); it != src.hypnograms.end()) return it->second;
      if (auto it = src.hypnograms.find(fallback); it != src.hypnograms.end()) return it->second;
      throw InputError("patient " + src.id + " has no hypnogram for source " + wanted);
    };
    PatientRecord p;
    p.id = src.id;
    const auto& ref_events = events_of(e.reference_source);
    const auto& cand_events = events_of(e.candidate_source);
    const Hypnogram& ref_h = hypnogram_of(e.reference_hypnogram, e.reference_source);
    const Hypnogram& cand_h = hypnogram_of(e.candidate_hypnogram, e.reference_hypnogram);
    p.ahi[cohort.reference_source] = detect::compute_ahi(ref_events, ref_h);
    p.ahi[cohort.candidate_source] = detect::compute_ahi(cand_events, cand_h);
    p.annotations[cohort.reference_source] = ref_events;
    p.annotations[cohort.candidate_source] = cand_events;
    p.hypnograms[cohort.reference_source] = ref_h;
    p.hypnograms[cohort.candidate_source] = cand_h;
    cohort.patients.push_back(std::move(p));
  }
  return cohort;
}

}  // namespace somno::eval
