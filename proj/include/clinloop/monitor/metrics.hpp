#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "clinloop/emr/types.hpp"
#include "clinloop/time_util.hpp"

#include "json.hpp"

namespace clinloop::monitor {

// One labeled inference. Weights default to 1; metrics are weighted
// throughout so inverse-probability corrections can plug in later without
// touching the kernel (equal weights reduce exactly to the unweighted case).
struct LabeledSample {
  std::string packet_id;
  double score = 0.0;
  bool label = false;
  Timestamp inference_time = 0;
  emr::Sex sex = emr::Sex::Unknown;
  emr::Race race = emr::Race::Unknown;
  bool age_over_40 = false;
  double weight = 1.0;
};

// P(random positive outranks random negative), ties 1/2 — the weighted
// Mann-Whitney statistic. NaN when either class is empty.
double auroc(const std::vector<LabeledSample>& samples);

struct CurvePoint {
  double x = 0.0;  // ROC: fpr; PR: recall; calibration: mean score
  double y = 0.0;  // ROC: tpr; PR: precision; calibration: positive fraction
  std::int64_t n = 0;  // calibration bin count (unused elsewhere)
};

// (fpr, tpr) at every distinct score cut, anchored at (0,0) and (1,1).
std::vector<CurvePoint> roc_curve(const std::vector<LabeledSample>& samples);

// (recall, precision) at every distinct cut, recall ascending.
std::vector<CurvePoint> pr_curve(const std::vector<LabeledSample>& samples);

// Step-wise area under the precision-recall curve.
double average_precision(const std::vector<LabeledSample>& samples);

// Ten equal-width score bins over [0,1]; empty bins omitted; bin counts sum
// to the sample count.
std::vector<CurvePoint> calibration_curve(const std::vector<LabeledSample>& samples);

double trapezoid_area(const std::vector<CurvePoint>& curve);

struct Confusion {
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double ppv = 0.0;
};

// Predicted positive iff score >= threshold; a ratio is NaN when its
// denominator is zero.
Confusion confusion_at_threshold(const std::vector<LabeledSample>& samples,
                                 double threshold);

double prevalence(const std::vector<LabeledSample>& samples);

struct BootstrapCi {
  double lo = 0.0;
  double point = 0.0;
  double hi = 0.0;
  int nan_resamples = 0;
};

using MetricFn = std::function<double(const std::vector<LabeledSample>&)>;

// B seeded resamples with replacement (draw protocol: mt19937_64(seed),
// index = next() % n, row-major across resamples); lo/hi are nearest-rank
// percentiles of the non-NaN resample metrics, the point estimate is the
// metric on the original samples.
BootstrapCi bootstrap_ci(const MetricFn& metric,
                         const std::vector<LabeledSample>& samples, int B,
                         double level, std::uint64_t seed);

struct SubgroupRow {
  std::string group;  // "full_cohort", "sex_Female", "race_Asian", ...
  std::size_t n = 0;
  BootstrapCi auroc_ci;  // NaN fields for single-class groups
};

// Full-cohort row plus one row per observed value of sex, race and the
// age_over_40 split; deterministic order, NaN where the metric is undefined.
std::vector<SubgroupRow> subgroup_metrics(const std::vector<LabeledSample>& samples,
                                          int B, double level,
                                          std::uint64_t seed);

struct NetBenefitPoint {
  double pt = 0.0;
  double net_benefit = 0.0;
  double treat_all = 0.0;
  double treat_none = 0.0;  // identically zero
};

// NB(pt) = TP/n - (FP/n) * pt/(1-pt) classifying positive iff score >= pt.
std::vector<NetBenefitPoint> net_benefit(const std::vector<LabeledSample>& samples,
                                         const std::vector<double>& pt_grid);

struct MetricReport {
  std::string model_id;
  std::string cohort_name;  // "retrospective" / "prospective"
  Timestamp window_start = 0;
  Timestamp window_end = 0;
  std::size_t n = 0;
  BootstrapCi prevalence_ci;
  BootstrapCi auroc_ci;
  BootstrapCi average_precision_ci;
  double threshold = 0.5;
  Confusion at_threshold;
  std::vector<CurvePoint> roc;
  std::vector<CurvePoint> pr;
  std::vector<CurvePoint> calibration;
  std::vector<NetBenefitPoint> net_benefit_curve;
  std::vector<SubgroupRow> subgroups;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
};

struct ReportOptions {
  int bootstrap_B = 1000;
  double ci_level = 0.95;
  std::uint64_t bootstrap_seed = 17;
  std::vector<double> pt_grid;  // empty => 0.05..0.95 step 0.05
};

MetricReport compute_metric_report(const std::string& model_id,
                                   const std::string& cohort_name,
                                   Timestamp window_start, Timestamp window_end,
                                   const std::vector<LabeledSample>& samples,
                                   double threshold,
                                   const ReportOptions& options);

}  // namespace clinloop::monitor
