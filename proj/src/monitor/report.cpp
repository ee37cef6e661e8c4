#include "clinloop/monitor/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "clinloop/numfmt.hpp"

namespace clinloop::monitor {

namespace {

std::string fmt_metric(double v, int decimals = 3) {
  if (std::isnan(v)) return "NaN";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

std::string fmt_ci(const BootstrapCi& ci) {
  return fmt_metric(ci.point) + " [" + fmt_metric(ci.lo) + ", " +
         fmt_metric(ci.hi) + "]";
}

const char* kSeriesColors[] = {"#2b6cb0", "#c05621", "#2f855a", "#805ad5"};

}  // namespace

std::string svg_line_plot(const std::vector<std::vector<CurvePoint>>& series,
                          const std::vector<std::string>& names,
                          const std::string& x_label,
                          const std::string& y_label, bool diagonal) {
  const int w = 360, h = 300, m = 42;
  const double px = w - 2 * m, py = h - 2 * m;
  auto sx = [&](double x) { return m + x * px; };
  auto sy = [&](double y) { return h - m - y * py; };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                    std::to_string(w) + "\" height=\"" + std::to_string(h) +
                    "\" viewBox=\"0 0 " + std::to_string(w) + " " +
                    std::to_string(h) + "\">";
  svg += "<rect x=\"" + std::to_string(m) + "\" y=\"" + std::to_string(m) +
         "\" width=\"" + fmt_double(px) + "\" height=\"" + fmt_double(py) +
         "\" fill=\"none\" stroke=\"#999\"/>";
  if (diagonal) {
    svg += "<line x1=\"" + fmt_double(sx(0)) + "\" y1=\"" + fmt_double(sy(0)) +
           "\" x2=\"" + fmt_double(sx(1)) + "\" y2=\"" + fmt_double(sy(1)) +
           "\" stroke=\"#ccc\" stroke-dasharray=\"4 3\"/>";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kSeriesColors[s % 4];
    std::string pts;
    for (const auto& p : series[s]) {
      pts += fmt_double(sx(p.x)) + "," + fmt_double(sy(p.y)) + " ";
    }
    if (!pts.empty()) pts.pop_back();
    svg += "<polyline fill=\"none\" stroke=\"";
    svg += color;
    svg += "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>";
    if (s < names.size()) {
      svg += "<text x=\"" + std::to_string(m + 6) + "\" y=\"" +
             std::to_string(m + 14 + 14 * static_cast<int>(s)) +
             "\" font-size=\"11\" fill=\"";
      svg += color;
      svg += "\">" + names[s] + "</text>";
    }
  }
  svg += "<text x=\"" + std::to_string(w / 2) + "\" y=\"" +
         std::to_string(h - 10) +
         "\" font-size=\"11\" text-anchor=\"middle\">" + x_label + "</text>";
  svg += "<text x=\"12\" y=\"" + std::to_string(h / 2) +
         "\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 "
         "12 " +
         std::to_string(h / 2) + ")\">" + y_label + "</text>";
  svg += "</svg>";
  return svg;
}

DriftReport build_drift_report(const DriftSnapshot& snapshot,
                               const DriftBaseline& baseline,
                               const features::Vocabulary& vocab,
                               const DriftFlagOptions& options,
                               std::size_t top_k) {
  DriftReport r;
  r.snapshot = snapshot;
  r.flags = drift_flag(snapshot, baseline, vocab, options);

  if (snapshot.n_patients > 0 && baseline.n > 0) {
    const double nw = static_cast<double>(snapshot.n_patients);
    const double nb = static_cast<double>(baseline.n);
    std::vector<DriftReport::FeatureDelta> deltas;
    for (std::size_t i = 0; i < baseline.feature_mean.size() &&
                            i < snapshot.feature_mean.size();
         ++i) {
      const double se = std::sqrt(std::max(baseline.feature_var[i], 1.0 / nb) *
                                  (1.0 / nw + 1.0 / nb));
      const double z =
          std::abs(snapshot.feature_mean[i] - baseline.feature_mean[i]) / se;
      deltas.push_back({vocab.token_at(static_cast<int>(i)),
                        baseline.feature_mean[i], snapshot.feature_mean[i], z});
    }
    std::sort(deltas.begin(), deltas.end(),
              [](const auto& a, const auto& b) { return a.z > b.z; });
    if (deltas.size() > top_k) deltas.resize(top_k);
    r.top_deltas = std::move(deltas);
  }
  return r;
}

nlohmann::json DriftReport::to_json() const {
  nlohmann::json flags_j = nlohmann::json::array();
  for (const auto& f : flags) {
    flags_j.push_back({{"quantity", f.quantity},
                       {"z", std::isinf(f.z) ? 1e308 : f.z}});
  }
  nlohmann::json deltas_j = nlohmann::json::array();
  for (const auto& d : top_deltas) {
    deltas_j.push_back({{"token", d.token},
                        {"baseline_mean", d.baseline_mean},
                        {"window_mean", d.window_mean},
                        {"z", std::isinf(d.z) ? 1e308 : d.z}});
  }
  return {{"model_id", snapshot.model_id},
          {"window_start", format_rfc3339(snapshot.window_start)},
          {"window_end", format_rfc3339(snapshot.window_end)},
          {"n", snapshot.n},
          {"n_patients", snapshot.n_patients},
          {"n_labeled_patients", snapshot.n_labeled_patients},
          {"prediction_mean", snapshot.prediction_mean},
          {"label_mean", snapshot.label_mean},
          {"flags", flags_j},
          {"top_deltas", deltas_j}};
}

namespace {

void html_metric_section(std::string& html, const MetricReport& r) {
  html += "<h2>" + r.model_id + " — " + r.cohort_name + "</h2>";
  html += "<p>window " + format_rfc3339(r.window_start) + " … " +
          format_rfc3339(r.window_end) + ", n = " + std::to_string(r.n) +
          "</p>";
  html += "<table><tr><th>metric</th><th>value [95% CI]</th></tr>";
  html += "<tr><td>prevalence</td><td>" + fmt_ci(r.prevalence_ci) + "</td></tr>";
  html += "<tr><td>AUROC</td><td>" + fmt_ci(r.auroc_ci) + "</td></tr>";
  html += "<tr><td>average precision</td><td>" + fmt_ci(r.average_precision_ci) +
          "</td></tr>";
  html += "<tr><td>threshold</td><td>" + fmt_metric(r.threshold) + "</td></tr>";
  html += "<tr><td>accuracy</td><td>" + fmt_metric(r.at_threshold.accuracy) +
          "</td></tr>";
  html += "<tr><td>sensitivity</td><td>" +
          fmt_metric(r.at_threshold.sensitivity) + "</td></tr>";
  html += "<tr><td>specificity</td><td>" +
          fmt_metric(r.at_threshold.specificity) + "</td></tr>";
  html += "<tr><td>PPV</td><td>" + fmt_metric(r.at_threshold.ppv) + "</td></tr>";
  html += "</table>";

  html += "<h3>Subgroups</h3><table><tr><th>group</th><th>n</th><th>AUROC [95% "
          "CI]</th></tr>";
  for (const auto& g : r.subgroups) {
    html += "<tr><td>" + g.group + "</td><td>" + std::to_string(g.n) +
            "</td><td>" + fmt_ci(g.auroc_ci) + "</td></tr>";
  }
  html += "</table>";
}

}  // namespace

ReportFiles render_report(const std::vector<MetricReport>& reports,
                          const std::vector<DriftReport>& drift,
                          const std::filesystem::path& dest_dir) {
  if (reports.empty()) throw ValidationError("render_report needs a report");
  std::error_code ec;
  std::filesystem::create_directories(dest_dir, ec);

  ReportFiles files;
  files.metrics_json = dest_dir / "metrics.json";
  files.report_html = dest_dir / "report.html";

  nlohmann::json root;
  root["format_version"] = 1;
  nlohmann::json reports_j = nlohmann::json::array();
  for (const auto& r : reports) reports_j.push_back(r.to_json());
  root["reports"] = reports_j;
  nlohmann::json drift_j = nlohmann::json::array();
  for (const auto& d : drift) drift_j.push_back(d.to_json());
  root["drift"] = drift_j;
  {
    std::ofstream f(files.metrics_json, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write '" + files.metrics_json.string() + "'");
    f << root.dump(2) << '\n';
    if (!f) throw IoError("write failed: '" + files.metrics_json.string() + "'");
  }

  std::string html =
      "<!doctype html><html><head><meta charset=\"utf-8\">"
      "<title>model monitoring report</title><style>"
      "body{font-family:sans-serif;margin:24px;max-width:1100px}"
      "table{border-collapse:collapse;margin:8px 0}"
      "td,th{border:1px solid #bbb;padding:3px 10px;font-size:13px;"
      "text-align:left}"
      ".plots{display:flex;flex-wrap:wrap;gap:12px}"
      "</style></head><body><h1>Model monitoring report</h1>";

  for (const auto& r : reports) html_metric_section(html, r);

  // Overlay the cohorts on shared axes.
  std::vector<std::vector<CurvePoint>> rocs, prs, cals;
  std::vector<std::string> names;
  for (const auto& r : reports) {
    rocs.push_back(r.roc);
    prs.push_back(r.pr);
    cals.push_back(r.calibration);
    names.push_back(r.cohort_name);
  }
  html += "<h2>Curves</h2><div class=\"plots\">";
  html += svg_line_plot(rocs, names, "false positive rate", "true positive rate",
                        true);
  html += svg_line_plot(prs, names, "recall", "precision", false);
  html += svg_line_plot(cals, names, "mean predicted", "fraction positive", true);
  html += "</div>";

  html += "<h2>Drift</h2>";
  if (drift.empty()) {
    html += "<p>No drift windows computed.</p>";
  }
  for (const auto& d : drift) {
    html += "<h3>window " + format_rfc3339(d.snapshot.window_start) + " … " +
            format_rfc3339(d.snapshot.window_end) + " (n = " +
            std::to_string(d.snapshot.n) + ")</h3>";
    if (d.flags.empty()) {
      html += "<p>No flags.</p>";
    } else {
      html += "<table><tr><th>flagged quantity</th><th>z</th></tr>";
      for (const auto& f : d.flags) {
        html += "<tr><td>" + f.quantity + "</td><td>" + fmt_metric(f.z, 1) +
                "</td></tr>";
      }
      html += "</table>";
    }
    html += "<table><tr><th>token</th><th>baseline mean</th><th>window mean</th>"
            "<th>z</th></tr>";
    for (const auto& t : d.top_deltas) {
      html += "<tr><td>" + t.token + "</td><td>" + fmt_metric(t.baseline_mean) +
              "</td><td>" + fmt_metric(t.window_mean) + "</td><td>" +
              fmt_metric(t.z, 1) + "</td></tr>";
    }
    html += "</table>";
  }
  html += "</body></html>\n";

  {
    std::ofstream f(files.report_html, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write '" + files.report_html.string() + "'");
    f << html;
    if (!f) throw IoError("write failed: '" + files.report_html.string() + "'");
  }
  return files;
}

}  // namespace clinloop::monitor
