#pragma once

#include <filesystem>
#include <vector>

#include "clinloop/monitor/drift.hpp"
#include "clinloop/monitor/metrics.hpp"

namespace clinloop::monitor {

struct DriftReport {
  DriftSnapshot snapshot;
  std::vector<DriftFlag> flags;
  // The largest absolute-z feature deltas, for the report table.
  struct FeatureDelta {
    std::string token;
    double baseline_mean = 0.0;
    double window_mean = 0.0;
    double z = 0.0;
  };
  std::vector<FeatureDelta> top_deltas;

  nlohmann::json to_json() const;
};

DriftReport build_drift_report(const DriftSnapshot& snapshot,
                               const DriftBaseline& baseline,
                               const features::Vocabulary& vocab,
                               const DriftFlagOptions& options = {},
                               std::size_t top_k = 15);

// Emits metrics.json (machine-readable, round-trips through
// MetricReport::from_json) and report.html (self-contained, inline SVG ROC /
// PR / calibration plots plus subgroup and drift tables).
struct ReportFiles {
  std::filesystem::path metrics_json;
  std::filesystem::path report_html;
};

ReportFiles render_report(const std::vector<MetricReport>& reports,
                          const std::vector<DriftReport>& drift,
                          const std::filesystem::path& dest_dir);

// SVG helpers exposed for tests (the ROC polyline vertex count must equal
// the ROC point count).
std::string svg_line_plot(const std::vector<std::vector<CurvePoint>>& series,
                          const std::vector<std::string>& names,
                          const std::string& x_label,
                          const std::string& y_label, bool diagonal);

}  // namespace clinloop::monitor
