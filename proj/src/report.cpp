#include "somno/report.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "somno/errors.hpp"
#include "somno/ingest.hpp"

namespace somno::report {

using nlohmann::json;
using namespace somno::eval;

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> get_opt(const json& j, const char* key) {
  const json& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

json interval_json(const Interval& i) {
  return {{"lo", opt(i.lo)}, {"hi", opt(i.hi)}, {"n_valid", i.n_valid}, {"n_undefined", i.n_undefined}};
}

Interval interval_from(const json& j) {
  return {get_opt(j, "lo"), get_opt(j, "hi"), j.at("n_valid").get<std::size_t>(),
          j.at("n_undefined").get<std::size_t>()};
}

// JSON has no infinity; +inf (sweep origin, F under perfect agreement) is stored as null.
json unbounded(double v) { return std::isinf(v) && v > 0 ? json(nullptr) : json(v); }

double unbounded_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

json curve_json(const std::vector<CurvePoint>& points) {
  json out = json::array();
  for (const auto& p : points) out.push_back({{"x", p.x}, {"y", p.y}, {"threshold", unbounded(p.threshold)}});
  return out;
}

std::vector<CurvePoint> curve_from(const json& j) {
  std::vector<CurvePoint> out;
  for (const auto& p : j) {
    out.push_back({p.at("x").get<double>(), p.at("y").get<double>(), unbounded_from(p.at("threshold"))});
  }
  return out;
}

json metrics_json(const BinaryMetrics& m) {
  return {{"tp", m.tp},
          {"fp", m.fp},
          {"fn", m.fn},
          {"tn", m.tn},
          {"sensitivity", opt(m.sensitivity)},
          {"ppv", opt(m.ppv)},
          {"specificity", opt(m.specificity)},
          {"npv", opt(m.npv)}};
}

BinaryMetrics metrics_from(const json& j) {
  BinaryMetrics m;
  m.tp = j.at("tp");
  m.fp = j.at("fp");
  m.fn = j.at("fn");
  m.tn = j.at("tn");
  m.sensitivity = get_opt(j, "sensitivity");
  m.ppv = get_opt(j, "ppv");
  m.specificity = get_opt(j, "specificity");
  m.npv = get_opt(j, "npv");
  return m;
}

json to_json(const EvalReport& r) {
  json j;
  j["schema_version"] = r.schema_version;
  j["reference_source"] = r.reference_source;
  j["candidate_source"] = r.candidate_source;
  j["seed"] = r.seed;
  j["n_resamples"] = r.n_resamples;
  j["level"] = r.level;
  j["pairs"] = json::array();
  for (const auto& p : r.pairs) j["pairs"].push_back({{"id", p.id}, {"ref", p.ref}, {"cand", p.cand}});

  j["thresholds"] = json::array();
  for (const auto& t : r.thresholds) {
    json tj{{"threshold", t.threshold},
            {"metrics", metrics_json(t.metrics)},
            {"ci_sensitivity", interval_json(t.ci_sensitivity)},
            {"ci_ppv", interval_json(t.ci_ppv)},
            {"ci_auc_roc", interval_json(t.ci_auc_roc)},
            {"ci_auc_pr", interval_json(t.ci_auc_pr)},
            {"note", t.note}};
    if (t.auc) {
      tj["auc"] = {{"auc_roc", t.auc->auc_roc},
                   {"auc_pr", t.auc->auc_pr},
                   {"roc", curve_json(t.auc->roc)},
                   {"pr", curve_json(t.auc->pr)}};
    } else {
      tj["auc"] = nullptr;
    }
    tj["tuned"] = json::array();
    for (const auto& u : t.tuned) {
      tj["tuned"].push_back({{"target_ppv", u.target_ppv},
                             {"tau", opt(u.tau)},
                             {"sensitivity", opt(u.sensitivity)},
                             {"ppv", opt(u.ppv)},
                             {"ci_sensitivity", interval_json(u.ci_sensitivity)},
                             {"ci_ppv", interval_json(u.ci_ppv)},
                             {"note", u.note}});
    }
    j["thresholds"].push_back(std::move(tj));
  }

  if (r.icc) {
    const auto& i = *r.icc;
    j["icc"] = {{"form", i.form},       {"icc", i.icc},         {"p_value", i.p_value},
                {"f_statistic", unbounded(i.f_statistic)}, {"df1", i.df1}, {"df2", i.df2},
                {"ms_rows", i.ms_rows}, {"ms_cols", i.ms_cols}, {"ms_error", i.ms_error}};
  } else {
    j["icc"] = nullptr;
  }
  if (r.pearson) {
    j["pearson"] = {{"r", r.pearson->r}, {"p_value", r.pearson->p_value}, {"n", r.pearson->n}};
  } else {
    j["pearson"] = nullptr;
  }
  j["correlation_note"] = r.correlation_note;
  if (r.bland_altman) {
    const auto& b = *r.bland_altman;
    json points = json::array();
    for (const auto& p : b.points) points.push_back({{"mean", p.mean}, {"diff", p.diff}});
    j["bland_altman"] = {{"bias", b.bias},     {"sd", b.sd},          {"loa_lo", b.loa_lo},
                         {"loa_hi", b.loa_hi}, {"points", points}};
  } else {
    j["bland_altman"] = nullptr;
  }
  j["bands"] = r.bands;
  j["confusion"] = {{"labels", r.confusion.labels}, {"counts", r.confusion.counts}};
  if (r.events) {
    const auto& e = *r.events;
    j["events"] = {{"patients", e.patients},
                   {"n_pred", e.n_pred},
                   {"n_ref", e.n_ref},
                   {"tp_pred", e.tp_pred},
                   {"detected_ref", e.detected_ref},
                   {"ppv", opt(e.ppv)},
                   {"sensitivity", opt(e.sensitivity)},
                   {"ci_ppv", interval_json(e.ci_ppv)},
                   {"ci_sensitivity", interval_json(e.ci_sensitivity)},
                   {"min_overlap_s", e.min_overlap_s},
                   {"margin_s", e.margin_s},
                   {"one_to_one", e.one_to_one}};
  } else {
    j["events"] = nullptr;
  }
  return j;
}

EvalReport from_json(const json& j) {
  EvalReport r;
  r.schema_version = j.at("schema_version").get<std::string>();
  if (r.schema_version != kReportSchema) throw InputError("unsupported report schema: " + r.schema_version);
  r.reference_source = j.at("reference_source");
  r.candidate_source = j.at("candidate_source");
  r.seed = j.at("seed");
  r.n_resamples = j.at("n_resamples");
  r.level = j.at("level");
  for (const auto& p : j.at("pairs")) r.pairs.push_back({p.at("id"), p.at("ref"), p.at("cand")});

  for (const auto& tj : j.at("thresholds")) {
    ThresholdReport t;
    t.threshold = tj.at("threshold");
    t.metrics = metrics_from(tj.at("metrics"));
    t.ci_sensitivity = interval_from(tj.at("ci_sensitivity"));
    t.ci_ppv = interval_from(tj.at("ci_ppv"));
    t.ci_auc_roc = interval_from(tj.at("ci_auc_roc"));
    t.ci_auc_pr = interval_from(tj.at("ci_auc_pr"));
    t.note = tj.at("note");
    if (const json& a = tj.at("auc"); !a.is_null()) {
      t.auc = AucCurves{a.at("auc_roc"), a.at("auc_pr"), curve_from(a.at("roc")), curve_from(a.at("pr"))};
    }
    for (const auto& uj : tj.at("tuned")) {
      TunedResult u;
      u.target_ppv = uj.at("target_ppv");
      u.tau = get_opt(uj, "tau");
      u.sensitivity = get_opt(uj, "sensitivity");
      u.ppv = get_opt(uj, "ppv");
      u.ci_sensitivity = interval_from(uj.at("ci_sensitivity"));
      u.ci_ppv = interval_from(uj.at("ci_ppv"));
      u.note = uj.at("note");
      t.tuned.push_back(std::move(u));
    }
    r.thresholds.push_back(std::move(t));
  }

  if (const json& i = j.at("icc"); !i.is_null()) {
    r.icc = IccResult{i.at("form"),  i.at("icc"),     i.at("p_value"), unbounded_from(i.at("f_statistic")), i.at("df1"),
                      i.at("df2"),   i.at("ms_rows"), i.at("ms_cols"), i.at("ms_error")};
  }
  if (const json& p = j.at("pearson"); !p.is_null()) {
    r.pearson = PearsonResult{p.at("r"), p.at("p_value"), p.at("n")};
  }
  r.correlation_note = j.at("correlation_note");
  if (const json& b = j.at("bland_altman"); !b.is_null()) {
    BlandAltman ba;
    ba.bias = b.at("bias");
    ba.sd = b.at("sd");
    ba.loa_lo = b.at("loa_lo");
    ba.loa_hi = b.at("loa_hi");
    for (const auto& p : b.at("points")) ba.points.push_back({p.at("mean"), p.at("diff")});
    r.bland_altman = std::move(ba);
  }
  r.bands = j.at("bands");
  r.confusion.labels = j.at("confusion").at("labels").get<std::vector<std::string>>();
  r.confusion.counts = j.at("confusion").at("counts").get<std::vector<std::vector<std::size_t>>>();
  if (const json& e = j.at("events"); !e.is_null()) {
    EventLevelReport ev;
    ev.patients = e.at("patients");
    ev.n_pred = e.at("n_pred");
    ev.n_ref = e.at("n_ref");
    ev.tp_pred = e.at("tp_pred");
    ev.detected_ref = e.at("detected_ref");
    ev.ppv = get_opt(e, "ppv");
    ev.sensitivity = get_opt(e, "sensitivity");
    ev.ci_ppv = interval_from(e.at("ci_ppv"));
    ev.ci_sensitivity = interval_from(e.at("ci_sensitivity"));
    ev.min_overlap_s = e.at("min_overlap_s");
    ev.margin_s = e.at("margin_s");
    ev.one_to_one = e.at("one_to_one");
    r.events = std::move(ev);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Text rendering

std::size_t display_width(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80 ? 1 : 0;
  return n;
}

class Table {
 public:
  explicit Table(std::vector<std::string> header) { rows_.push_back(std::move(header)); }
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

  std::string str() const {
    std::vector<std::size_t> widths;
    for (const auto& row : rows_) {
      widths.resize(std::max(widths.size(), row.size()), 0);
      for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], display_width(row[c]));
    }
    std::string out;
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      std::string line;
      for (std::size_t c = 0; c < rows_[r].size(); ++c) {
        if (c > 0) line += "  ";
        line += rows_[r][c];
        if (c + 1 < rows_[r].size()) line.append(widths[c] - display_width(rows_[r][c]), ' ');
      }
      out += line + "\n";
      if (r == 0) {
        std::size_t total = 0;
        for (std::size_t w : widths) total += w;
        out += std::string(total + 2 * (widths.size() - 1), '-') + "\n";
      }
    }
    return out;
  }

 private:
  std::vector<std::vector<std::string>> rows_;
};

std::string num(double v, int digits = 3) { return fmt::format("{:.{}f}", v, digits); }
std::string num(const Metric& v, int digits = 3) { return v ? num(*v, digits) : "undefined"; }
std::string pval(double p) { return fmt::format("{:.3g}", p); }

std::string ci(const Interval& i) {
  if (!i.lo || !i.hi) return "[n/a]";
  std::string s = fmt::format("[{}, {}]", num(*i.lo), num(*i.hi));
  if (i.n_undefined > 0) s += fmt::format(" ({} undefined)", i.n_undefined);
  return s;
}

std::string ahi_label(double t) { return fmt::format("AHI ≥ {}", t); }

}  // namespace

std::string dump_json(const EvalReport& report) { return to_json(report).dump(2) + "\n"; }

EvalReport parse_json(std::string_view text) {
  try {
    return from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed report: ") + e.what());
  }
}

EvalReport read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open report " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_json(buffer.str());
}

std::string render_text(const EvalReport& r) {
  std::string out;
  const int level_pct = static_cast<int>(std::lround(r.level * 100.0));
  out += fmt::format("Candidate \"{}\" vs reference \"{}\"\n", r.candidate_source, r.reference_source);
  out += fmt::format("Patients: {}   Bootstrap: {} resamples, seed {}, {}% percentile intervals\n\n",
                     r.pairs.size(), r.n_resamples, r.seed, level_pct);

  out += "Patient-level classification\n";
  Table cls({"Threshold", "Sensitivity", fmt::format("{}% CI", level_pct), "PPV", fmt::format("{}% CI", level_pct),
             "TP", "FP", "FN", "TN"});
  for (const auto& t : r.thresholds) {
    cls.add({ahi_label(t.threshold), num(t.metrics.sensitivity), ci(t.ci_sensitivity), num(t.metrics.ppv),
             ci(t.ci_ppv), std::to_string(t.metrics.tp), std::to_string(t.metrics.fp),
             std::to_string(t.metrics.fn), std::to_string(t.metrics.tn)});
  }
  out += cls.str() + "\n";

  out += "Threshold-free discrimination\n";
  Table auc({"Threshold", "AUC-ROC", fmt::format("{}% CI", level_pct), "AUC-PR", fmt::format("{}% CI", level_pct)});
  for (const auto& t : r.thresholds) {
    if (t.auc) {
      auc.add({ahi_label(t.threshold), num(t.auc->auc_roc), ci(t.ci_auc_roc), num(t.auc->auc_pr), ci(t.ci_auc_pr)});
    } else {
      auc.add({ahi_label(t.threshold), "undefined", t.note, "undefined", ""});
    }
  }
  out += auc.str() + "\n";

  out += "PPV-tuned candidate cutoffs\n";
  Table tuned({"Threshold", "Target PPV", "Cutoff", "Sensitivity", fmt::format("{}% CI", level_pct), "PPV",
               fmt::format("{}% CI", level_pct)});
  for (const auto& t : r.thresholds) {
    for (const auto& u : t.tuned) {
      if (u.tau) {
        tuned.add({ahi_label(t.threshold), num(u.target_ppv, 2), num(*u.tau, 2), num(u.sensitivity),
                   ci(u.ci_sensitivity), num(u.ppv), ci(u.ci_ppv)});
      } else {
        tuned.add({ahi_label(t.threshold), num(u.target_ppv, 2), "undefined", u.note, "", "", ""});
      }
    }
  }
  out += tuned.str() + "\n";

  out += "AHI agreement\n";
  Table agree({"Statistic", "Value", "p-value", "Detail"});
  if (r.icc) {
    agree.add({r.icc->form, num(r.icc->icc), pval(r.icc->p_value),
               fmt::format("F = {} on ({}, {}) df", num(r.icc->f_statistic, 2), r.icc->df1, r.icc->df2)});
  } else {
    agree.add({"ICC(2,1)", "undefined", "", r.correlation_note});
  }
  if (r.pearson) {
    agree.add({"Pearson r", num(r.pearson->r), pval(r.pearson->p_value), fmt::format("n = {}", r.pearson->n)});
  } else {
    agree.add({"Pearson r", "undefined", "", r.correlation_note});
  }
  if (r.bland_altman) {
    const auto& b = *r.bland_altman;
    agree.add({"Bland-Altman bias", num(b.bias, 2), "", fmt::format("sd = {}", num(b.sd, 2))});
    agree.add({"Limits of agreement", fmt::format("[{}, {}]", num(b.loa_lo, 2), num(b.loa_hi, 2)), "",
               "bias ± 1.96 sd"});
  }
  out += agree.str() + "\n";

  out += "Severity confusion (rows: reference, columns: candidate)\n";
  std::vector<std::string> header{"Reference \\ Candidate"};
  header.insert(header.end(), r.confusion.labels.begin(), r.confusion.labels.end());
  Table conf(header);
  for (std::size_t i = 0; i < r.confusion.counts.size(); ++i) {
    std::vector<std::string> row{i < r.confusion.labels.size() ? r.confusion.labels[i] : ""};
    for (std::size_t c : r.confusion.counts[i]) row.push_back(std::to_string(c));
    conf.add(std::move(row));
  }
  out += conf.str() + "\n";

  out += "Event-per-event segmentation of respiratory events\n";
  if (r.events) {
    const auto& e = *r.events;
    Table ev({"Comparison", "PPV for segmentation", fmt::format("{}% CI", level_pct), "Sensitivity for segmentation",
              fmt::format("{}% CI", level_pct), "Reference events", "Predicted events"});
    ev.add({r.candidate_source + " vs " + r.reference_source, num(e.ppv), ci(e.ci_ppv), num(e.sensitivity),
            ci(e.ci_sensitivity), std::to_string(e.n_ref), std::to_string(e.n_pred)});
    out += ev.str();
    out += fmt::format("Matching: overlap ≥ {} s with reference events widened by {} s, {}\n", e.min_overlap_s,
                       e.margin_s, e.one_to_one ? "one-to-one" : "many-to-many");
  } else {
    out += "not available (annotations missing for one source)\n";
  }
  return out;
}

std::vector<std::filesystem::path> render_plot_data(const EvalReport& r, const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw InputError("cannot create " + directory.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto emit = [&](const char* name, const std::string& body) {
    const auto path = directory / name;
    write_file_atomic(path, body);
    written.push_back(path);
  };

  std::string regression = "patient_id,ref_ahi,cand_ahi\n";
  for (const auto& p : r.pairs) regression += fmt::format("{},{},{}\n", p.id, p.ref, p.cand);
  emit("regression.csv", regression);

  std::string ba;
  if (r.bland_altman) {
    const auto& b = *r.bland_altman;
    ba += fmt::format("# bias,{}\n# sd,{}\n# loa_lo,{}\n# loa_hi,{}\n", b.bias, b.sd, b.loa_lo, b.loa_hi);
  }
  ba += "mean,diff\n";
  if (r.bland_altman) {
    for (const auto& p : r.bland_altman->points) ba += fmt::format("{},{}\n", p.mean, p.diff);
  }
  emit("bland_altman.csv", ba);

  std::string roc = "ahi_threshold,cutoff,fpr,tpr\n";
  std::string pr = "ahi_threshold,cutoff,recall,precision\n";
  for (const auto& t : r.thresholds) {
    if (!t.auc) continue;
    for (const auto& p : t.auc->roc) roc += fmt::format("{},{},{},{}\n", t.threshold, p.threshold, p.x, p.y);
    for (const auto& p : t.auc->pr) pr += fmt::format("{},{},{},{}\n", t.threshold, p.threshold, p.x, p.y);
  }
  emit("roc.csv", roc);
  emit("pr.csv", pr);

  std::string conf = "reference";
  for (const auto& l : r.confusion.labels) conf += "," + l;
  conf += "\n";
  for (std::size_t i = 0; i < r.confusion.counts.size(); ++i) {
    conf += r.confusion.labels.at(i);
    for (std::size_t c : r.confusion.counts[i]) conf += fmt::format(",{}", c);
    conf += "\n";
  }
  emit("confusion.csv", conf);
  return written;
}

}  // namespace somno::report
