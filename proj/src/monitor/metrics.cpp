#include "clinloop/monitor/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace clinloop::monitor {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// JSON has no NaN literal; undefined metric cells serialize as the string
// "NaN", mirroring how the report tables render them.
nlohmann::json num_or_nan(double v) {
  if (std::isnan(v)) return "NaN";
  return v;
}

double nan_from_json(const nlohmann::json& j) {
  if (j.is_string()) return kNaN;
  return j.get<double>();
}

struct ScoreGroup {
  double score;
  double w_pos;
  double w_neg;
};

// Distinct scores ascending with per-group class weights.
std::vector<ScoreGroup> group_by_score(const std::vector<LabeledSample>& samples) {
  std::vector<const LabeledSample*> sorted;
  sorted.reserve(samples.size());
  for (const auto& s : samples) sorted.push_back(&s);
  std::sort(sorted.begin(), sorted.end(),
            [](const LabeledSample* a, const LabeledSample* b) {
              return a->score < b->score;
            });
  std::vector<ScoreGroup> groups;
  for (const auto* s : sorted) {
    if (groups.empty() || groups.back().score != s->score) {
      groups.push_back({s->score, 0.0, 0.0});
    }
    (s->label ? groups.back().w_pos : groups.back().w_neg) += s->weight;
  }
  return groups;
}

}  // namespace

double auroc(const std::vector<LabeledSample>& samples) {
  bool has_pos = false;
  bool has_neg = false;
  for (const auto& s : samples) (s.label ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) return kNaN;

  const auto groups = group_by_score(samples);
  double total_pos = 0.0;
  double total_neg = 0.0;
  double num = 0.0;
  double cum_neg = 0.0;
  for (const auto& g : groups) {
    num += g.w_pos * (cum_neg + 0.5 * g.w_neg);
    cum_neg += g.w_neg;
    total_pos += g.w_pos;
    total_neg += g.w_neg;
  }
  return num / (total_pos * total_neg);
}

std::vector<CurvePoint> roc_curve(const std::vector<LabeledSample>& samples) {
  const auto groups = group_by_score(samples);
  double total_pos = 0.0;
  double total_neg = 0.0;
  for (const auto& g : groups) {
    total_pos += g.w_pos;
    total_neg += g.w_neg;
  }
  if (total_pos == 0.0 || total_neg == 0.0) {
    throw ValidationError("ROC needs both classes");
  }
  // Threshold sweeps from above the max score downward; each distinct score
  // admits its group into the predicted-positive set.
  std::vector<CurvePoint> curve;
  curve.push_back({0.0, 0.0, 0});
  double tp = 0.0;
  double fp = 0.0;
  for (auto it = groups.rbegin(); it != groups.rend(); ++it) {
    tp += it->w_pos;
    fp += it->w_neg;
    curve.push_back({fp / total_neg, tp / total_pos, 0});
  }
  return curve;
}

std::vector<CurvePoint> pr_curve(const std::vector<LabeledSample>& samples) {
  const auto groups = group_by_score(samples);
  double total_pos = 0.0;
  for (const auto& g : groups) total_pos += g.w_pos;
  if (total_pos == 0.0 || groups.empty()) {
    throw ValidationError("PR needs both classes");
  }
  bool has_neg = false;
  for (const auto& g : groups) has_neg = has_neg || g.w_neg > 0.0;
  if (!has_neg) throw ValidationError("PR needs both classes");

  std::vector<CurvePoint> curve;
  double tp = 0.0;
  double pp = 0.0;
  for (auto it = groups.rbegin(); it != groups.rend(); ++it) {
    tp += it->w_pos;
    pp += it->w_pos + it->w_neg;
    curve.push_back({tp / total_pos, tp / pp, 0});
  }
  return curve;
}

double average_precision(const std::vector<LabeledSample>& samples) {
  bool has_pos = false;
  bool has_neg = false;
  for (const auto& s : samples) (s.label ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) return kNaN;
  const auto curve = pr_curve(samples);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (const auto& p : curve) {
    ap += (p.x - prev_recall) * p.y;
    prev_recall = p.x;
  }
  return ap;
}

std::vector<CurvePoint> calibration_curve(
    const std::vector<LabeledSample>& samples) {
  struct Bin {
    double w_sum = 0.0;
    double score_sum = 0.0;
    double pos_sum = 0.0;
    std::int64_t n = 0;
  };
  Bin bins[10];
  for (const auto& s : samples) {
    int b = static_cast<int>(s.score * 10.0);
    if (b > 9) b = 9;
    if (b < 0) b = 0;
    bins[b].w_sum += s.weight;
    bins[b].score_sum += s.weight * s.score;
    bins[b].pos_sum += s.label ? s.weight : 0.0;
    ++bins[b].n;
  }
  std::vector<CurvePoint> out;
  for (const auto& b : bins) {
    if (b.n == 0) continue;
    out.push_back({b.score_sum / b.w_sum, b.pos_sum / b.w_sum, b.n});
  }
  return out;
}

double trapezoid_area(const std::vector<CurvePoint>& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].x - curve[i - 1].x) * (curve[i].y + curve[i - 1].y) / 2.0;
  }
  return area;
}

Confusion confusion_at_threshold(const std::vector<LabeledSample>& samples,
                                 double threshold) {
  double tp = 0.0, fp = 0.0, tn = 0.0, fn = 0.0;
  for (const auto& s : samples) {
    const bool pred = s.score >= threshold;
    if (pred && s.label) tp += s.weight;
    if (pred && !s.label) fp += s.weight;
    if (!pred && !s.label) tn += s.weight;
    if (!pred && s.label) fn += s.weight;
  }
  Confusion c;
  const double total = tp + fp + tn + fn;
  c.accuracy = total > 0.0 ? (tp + tn) / total : kNaN;
  c.sensitivity = (tp + fn) > 0.0 ? tp / (tp + fn) : kNaN;
  c.specificity = (tn + fp) > 0.0 ? tn / (tn + fp) : kNaN;
  c.ppv = (tp + fp) > 0.0 ? tp / (tp + fp) : kNaN;
  return c;
}

double prevalence(const std::vector<LabeledSample>& samples) {
  double w = 0.0;
  double pos = 0.0;
  for (const auto& s : samples) {
    w += s.weight;
    pos += s.label ? s.weight : 0.0;
  }
  return w > 0.0 ? pos / w : kNaN;
}

BootstrapCi bootstrap_ci(const MetricFn& metric,
                         const std::vector<LabeledSample>& samples, int B,
                         double level, std::uint64_t seed) {
  if (samples.empty()) throw ValidationError("bootstrap needs samples");
  BootstrapCi out;
  out.point = metric(samples);

  const std::size_t n = samples.size();
  std::mt19937_64 rng(seed);
  std::vector<double> stats;
  stats.reserve(B);
  std::vector<LabeledSample> resample(n);
  for (int b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      resample[i] = samples[rng() % n];
    }
    const double v = metric(resample);
    if (std::isnan(v)) {
      ++out.nan_resamples;
    } else {
      stats.push_back(v);
    }
  }
  if (stats.empty()) {
    out.lo = kNaN;
    out.hi = kNaN;
    return out;
  }
  std::sort(stats.begin(), stats.end());
  const double alpha = (1.0 - level) / 2.0;
  // ceil(q*m) in exact arithmetic; the epsilon absorbs the rounding of
  // quantities like (1-0.95)/2, which lands a hair above 0.025.
  auto nearest_rank = [&](double q) {
    std::size_t k =
        static_cast<std::size_t>(std::ceil(q * stats.size() - 1e-9));
    if (k < 1) k = 1;
    if (k > stats.size()) k = stats.size();
    return stats[k - 1];
  };
  out.lo = nearest_rank(alpha);
  out.hi = nearest_rank(1.0 - alpha);
  return out;
}

std::vector<SubgroupRow> subgroup_metrics(const std::vector<LabeledSample>& samples,
                                          int B, double level,
                                          std::uint64_t seed) {
  auto metric = [](const std::vector<LabeledSample>& s) { return auroc(s); };

  std::vector<std::pair<std::string, std::vector<LabeledSample>>> groups;
  groups.emplace_back("full_cohort", samples);

  auto add_groups = [&](auto key_fn) {
    std::map<std::string, std::vector<LabeledSample>> by_key;
    for (const auto& s : samples) by_key[key_fn(s)].push_back(s);
    for (auto& [key, members] : by_key) {
      groups.emplace_back(key, std::move(members));
    }
  };
  add_groups([](const LabeledSample& s) { return "sex_" + emr::to_string(s.sex); });
  add_groups([](const LabeledSample& s) { return "race_" + emr::to_string(s.race); });
  add_groups([](const LabeledSample& s) {
    return std::string(s.age_over_40 ? "age_over_40" : "age_40_or_under");
  });

  std::vector<SubgroupRow> rows;
  std::uint64_t group_seed = seed;
  for (const auto& [name, members] : groups) {
    SubgroupRow row;
    row.group = name;
    row.n = members.size();
    if (members.empty()) continue;
    row.auroc_ci = bootstrap_ci(metric, members, B, level, group_seed++);
    if (std::isnan(row.auroc_ci.point)) {
      row.auroc_ci.lo = kNaN;
      row.auroc_ci.hi = kNaN;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<NetBenefitPoint> net_benefit(const std::vector<LabeledSample>& samples,
                                         const std::vector<double>& pt_grid) {
  double total = 0.0;
  double total_pos = 0.0;
  for (const auto& s : samples) {
    total += s.weight;
    total_pos += s.label ? s.weight : 0.0;
  }
  std::vector<NetBenefitPoint> out;
  for (double pt : pt_grid) {
    if (!(pt > 0.0 && pt < 1.0)) {
      throw ValidationError("pt values must lie in (0,1)");
    }
    double tp = 0.0, fp = 0.0;
    for (const auto& s : samples) {
      if (s.score < pt) continue;
      (s.label ? tp : fp) += s.weight;
    }
    const double odds = pt / (1.0 - pt);
    NetBenefitPoint p;
    p.pt = pt;
    p.net_benefit = total > 0.0 ? tp / total - (fp / total) * odds : kNaN;
    p.treat_all = total > 0.0
                      ? total_pos / total - ((total - total_pos) / total) * odds
                      : kNaN;
    p.treat_none = 0.0;
    out.push_back(p);
  }
  return out;
}

namespace {

nlohmann::json ci_json(const BootstrapCi& ci) {
  return {{"lo", num_or_nan(ci.lo)},
          {"point", num_or_nan(ci.point)},
          {"hi", num_or_nan(ci.hi)},
          {"nan_resamples", ci.nan_resamples}};
}

BootstrapCi ci_from_json(const nlohmann::json& j) {
  BootstrapCi ci;
  ci.lo = nan_from_json(j.at("lo"));
  ci.point = nan_from_json(j.at("point"));
  ci.hi = nan_from_json(j.at("hi"));
  ci.nan_resamples = j.at("nan_resamples").get<int>();
  return ci;
}

nlohmann::json curve_json(const std::vector<CurvePoint>& curve) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : curve) arr.push_back({p.x, p.y, p.n});
  return arr;
}

std::vector<CurvePoint> curve_from_json(const nlohmann::json& arr) {
  std::vector<CurvePoint> out;
  for (const auto& p : arr) {
    out.push_back({p.at(0).get<double>(), p.at(1).get<double>(),
                   p.at(2).get<std::int64_t>()});
  }
  return out;
}

}  // namespace

nlohmann::json MetricReport::to_json() const {
  nlohmann::json subgroups_j = nlohmann::json::array();
  for (const auto& row : subgroups) {
    subgroups_j.push_back(
        {{"group", row.group}, {"n", row.n}, {"auroc", ci_json(row.auroc_ci)}});
  }
  nlohmann::json nb = nlohmann::json::array();
  for (const auto& p : net_benefit_curve) {
    nb.push_back({{"pt", p.pt},
                  {"net_benefit", num_or_nan(p.net_benefit)},
                  {"treat_all", num_or_nan(p.treat_all)},
                  {"treat_none", p.treat_none}});
  }
  return {{"model_id", model_id},
          {"cohort", cohort_name},
          {"window_start", format_rfc3339(window_start)},
          {"window_end", format_rfc3339(window_end)},
          {"n", n},
          {"prevalence", ci_json(prevalence_ci)},
          {"auroc", ci_json(auroc_ci)},
          {"average_precision", ci_json(average_precision_ci)},
          {"threshold", threshold},
          {"at_threshold",
           {{"accuracy", num_or_nan(at_threshold.accuracy)},
            {"sensitivity", num_or_nan(at_threshold.sensitivity)},
            {"specificity", num_or_nan(at_threshold.specificity)},
            {"ppv", num_or_nan(at_threshold.ppv)}}},
          {"roc", curve_json(roc)},
          {"pr", curve_json(pr)},
          {"calibration", curve_json(calibration)},
          {"net_benefit", nb},
          {"subgroups", subgroups_j}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  r.model_id = j.at("model_id").get<std::string>();
  r.cohort_name = j.at("cohort").get<std::string>();
  r.window_start = parse_rfc3339(j.at("window_start").get<std::string>());
  r.window_end = parse_rfc3339(j.at("window_end").get<std::string>());
  r.n = j.at("n").get<std::size_t>();
  r.prevalence_ci = ci_from_json(j.at("prevalence"));
  r.auroc_ci = ci_from_json(j.at("auroc"));
  r.average_precision_ci = ci_from_json(j.at("average_precision"));
  r.threshold = j.at("threshold").get<double>();
  const auto& at = j.at("at_threshold");
  r.at_threshold.accuracy = nan_from_json(at.at("accuracy"));
  r.at_threshold.sensitivity = nan_from_json(at.at("sensitivity"));
  r.at_threshold.specificity = nan_from_json(at.at("specificity"));
  r.at_threshold.ppv = nan_from_json(at.at("ppv"));
  r.roc = curve_from_json(j.at("roc"));
  r.pr = curve_from_json(j.at("pr"));
  r.calibration = curve_from_json(j.at("calibration"));
  for (const auto& p : j.at("net_benefit")) {
    r.net_benefit_curve.push_back({p.at("pt").get<double>(),
                                   nan_from_json(p.at("net_benefit")),
                                   nan_from_json(p.at("treat_all")),
                                   p.at("treat_none").get<double>()});
  }
  for (const auto& row : j.at("subgroups")) {
    SubgroupRow sg;
    sg.group = row.at("group").get<std::string>();
    sg.n = row.at("n").get<std::size_t>();
    sg.auroc_ci = ci_from_json(row.at("auroc"));
    r.subgroups.push_back(std::move(sg));
  }
  return r;
}

MetricReport compute_metric_report(const std::string& model_id,
                                   const std::string& cohort_name,
                                   Timestamp window_start, Timestamp window_end,
                                   const std::vector<LabeledSample>& samples,
                                   double threshold,
                                   const ReportOptions& options) {
  MetricReport r;
  r.model_id = model_id;
  r.cohort_name = cohort_name;
  r.window_start = window_start;
  r.window_end = window_end;
  r.n = samples.size();
  r.threshold = threshold;
  if (samples.empty()) return r;

  const int B = options.bootstrap_B;
  const double level = options.ci_level;
  r.prevalence_ci = bootstrap_ci(
      [](const std::vector<LabeledSample>& s) { return prevalence(s); },
      samples, B, level, options.bootstrap_seed);
  r.auroc_ci = bootstrap_ci(
      [](const std::vector<LabeledSample>& s) { return auroc(s); }, samples, B,
      level, options.bootstrap_seed + 1);
  r.average_precision_ci = bootstrap_ci(
      [](const std::vector<LabeledSample>& s) { return average_precision(s); },
      samples, B, level, options.bootstrap_seed + 2);
  r.at_threshold = confusion_at_threshold(samples, threshold);

  bool has_pos = false;
  bool has_neg = false;
  for (const auto& s : samples) (s.label ? has_pos : has_neg) = true;
  if (has_pos && has_neg) {
    r.roc = roc_curve(samples);
    r.pr = pr_curve(samples);
  }
  r.calibration = calibration_curve(samples);

  std::vector<double> grid = options.pt_grid;
  if (grid.empty()) {
    for (int i = 1; i <= 19; ++i) grid.push_back(i * 0.05);
  }
  r.net_benefit_curve = net_benefit(samples, grid);
  r.subgroups = subgroup_metrics(samples, B, level, options.bootstrap_seed + 3);
  return r;
}

}  // namespace clinloop::monitor
