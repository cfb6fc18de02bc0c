#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "polyprobe/io.hpp"
#include "polyprobe/pipeline/analyses.hpp"
#include "polyprobe/pipeline/records.hpp"

namespace polyprobe::report {

namespace fs = std::filesystem;
using pipeline::kNA;
using pipeline::LayerRecord;

inline constexpr std::size_t kDepthBins = 10;

inline std::size_t depth_bin(double depth) {
  return std::min<std::size_t>(kDepthBins - 1, static_cast<std::size_t>(std::floor(depth * kDepthBins + 1e-9)));
}

struct MeanSe {
  double mean = kNA;
  double se = kNA;  // sample sd / sqrt(n); NA for a single value
  std::size_t n = 0;
};

inline MeanSe mean_se(const std::vector<double>& values) {
  MeanSe out;
  out.n = values.size();
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(out.n);
  if (out.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.se = std::sqrt(ss / static_cast<double>(out.n - 1)) / std::sqrt(static_cast<double>(out.n));
  }
  return out;
}

// --- tables ---------------------------------------------------------------------------

inline io::CsvTable fig1_table(const std::vector<LayerRecord>& layers) {
  io::CsvTable t;
  t.header = {"model", "dataset", "language", "multilingual", "log_params", "max_r2", "best_layer", "best_depth"};
  for (const auto& r : pipeline::max_r2_rows(layers)) {
    t.rows.push_back({r.model_id, r.dataset_id, std::string(to_string(r.language)), pipeline::detail::bool_text(r.multilingual),
                      io::format_double(r.log_params), io::format_double(r.max_r2), std::to_string(r.best_layer),
                      io::format_double(r.best_depth)});
  }
  return t;
}

/// One row per (multilingual, depth bin) over layer records; NaN values are skipped.
inline io::CsvTable depth_table(const std::vector<LayerRecord>& layers, double LayerRecord::*field) {
  std::map<std::pair<bool, std::size_t>, std::vector<double>> cells;
  for (const auto& r : layers) {
    const double v = r.*field;
    if (std::isnan(v)) continue;
    cells[{r.multilingual, depth_bin(r.depth)}].push_back(v);
  }
  io::CsvTable t;
  t.header = {"multilingual", "depth_bin", "depth_lo", "depth_hi", "mean", "se", "n"};
  for (const auto& [key, values] : cells) {
    const auto s = mean_se(values);
    const double lo = static_cast<double>(key.second) / kDepthBins;
    t.rows.push_back({pipeline::detail::bool_text(key.first), std::to_string(key.second), io::format_double(lo),
                      io::format_double(static_cast<double>(key.second + 1) / kDepthBins), io::format_double(s.mean), io::format_double(s.se),
                      std::to_string(s.n)});
  }
  return t;
}

inline io::CsvTable fig2a_table(const std::vector<LayerRecord>& layers) { return depth_table(layers, &LayerRecord::mean_ci); }
inline io::CsvTable fig2b_table(const std::vector<LayerRecord>& layers) { return depth_table(layers, &LayerRecord::max_attn); }

/// Ladder rows as written by `analyze` (sorted by AIC), rescaled to the Baseline row.
inline io::CsvTable fig3_table(const io::CsvTable& ladder, const std::string& baseline = "Baseline") {
  const auto cols = pipeline::detail::locate(ladder, {"label", "aic"}, "ladder.csv");
  auto base_row = std::find_if(ladder.rows.begin(), ladder.rows.end(),
                               [&](const io::CsvRow& row) { return row[cols[0]] == baseline; });
  if (base_row == ladder.rows.end()) fail(ErrorKind::MissingAnalysis, "ladder.csv has no '" + baseline + "' row");
  const double base = pipeline::detail::number((*base_row)[cols[1]]);
  io::CsvTable t;
  t.header = {"label", "aic", "delta_aic"};
  for (const auto& row : ladder.rows) {
    const double aic = pipeline::detail::number(row[cols[1]]);
    t.rows.push_back({row[cols[0]], io::format_double(aic), io::format_double(aic - base)});
  }
  return t;
}

/// Per-model token counts (taken at each model's first recorded layer), summarised
/// by (multilingual, language).
inline io::CsvTable fig4_table(const std::vector<LayerRecord>& layers) {
  std::map<std::pair<std::string, std::string>, const LayerRecord*> first;
  for (const auto& r : layers) {
    auto& slot = first[{r.model_id, r.dataset_id}];
    if (!slot || r.layer < slot->layer) slot = &r;
  }
  std::map<std::pair<bool, std::string>, std::pair<std::vector<double>, std::vector<double>>> cells;
  for (const auto& [key, r] : first) {
    auto& c = cells[{r->multilingual, std::string(to_string(r->language))}];
    if (!std::isnan(r->mean_target_tokens)) c.first.push_back(r->mean_target_tokens);
    if (!std::isnan(r->mean_cue_tokens)) c.second.push_back(r->mean_cue_tokens);
  }
  io::CsvTable t;
  t.header = {"multilingual", "language", "target_tokens_mean", "target_tokens_se", "cue_tokens_mean", "cue_tokens_se",
              "n_models"};
  for (const auto& [key, c] : cells) {
    const auto target = mean_se(c.first);
    const auto cue = mean_se(c.second);
    t.rows.push_back({pipeline::detail::bool_text(key.first), key.second, io::format_double(target.mean),
                      io::format_double(target.se), io::format_double(cue.mean), io::format_double(cue.se),
                      std::to_string(target.n)});
  }
  return t;
}

// --- svg --------------------------------------------------------------------------------

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

class Svg {
 public:
  Svg(std::string title, std::string x_label, std::string y_label)
      : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

  /// kind: "line" joins points, "scatter" draws markers only. `refs` are dashed horizontal lines.
  std::string render(const std::vector<Series>& series, const std::string& kind,
                     const std::vector<std::pair<std::string, double>>& refs = {}) const {
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& [label, y] : refs) {
      if (!std::isfinite(y)) continue;
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
    for (const auto& s : series) {
      for (auto [x, y] : s.points) {
        if (!std::isfinite(x) || !std::isfinite(y)) continue;
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
    }
    if (x0 > x1) x0 = 0, x1 = 1;
    if (y0 > y1) y0 = 0, y1 = 1;
    if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
    if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
    auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * kPlotW; };
    auto py = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * kPlotH; };

    std::string out = header();
    out += axes(x0, x1, y0, y1);
    for (std::size_t i = 0; i < series.size(); ++i) {
      const auto& s = series[i];
      const char* color = kColors[i % 4];
      std::string path;
      for (auto [x, y] : s.points) {
        if (!std::isfinite(x) || !std::isfinite(y)) continue;
        if (kind == "line") path += (path.empty() ? "M" : " L") + num(px(x)) + " " + num(py(y));
        out += "<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) + "\" r=\"3\" fill=\"" + color + "\"/>\n";
      }
      if (!path.empty()) out += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + color + "\"/>\n";
      out += "<text x=\"" + num(kLeft + kPlotW + 10) + "\" y=\"" + num(kTop + 16.0 * (i + 1)) + "\" fill=\"" + color +
             "\">" + escape(s.name) + "</text>\n";
    }
    for (const auto& [label, y] : refs) {
      if (!std::isfinite(y)) continue;
      out += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(py(y)) + "\" x2=\"" + num(kLeft + kPlotW) + "\" y2=\"" +
             num(py(y)) + "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
      out += "<text x=\"" + num(kLeft + 4) + "\" y=\"" + num(py(y) - 3) + "\" font-size=\"9\" fill=\"#888\">" +
             escape(label) + "</text>\n";
    }
    return out + "</svg>\n";
  }

  std::string render_bars(const std::vector<std::pair<std::string, double>>& bars) const {
    double y0 = 0.0, y1 = 0.0;
    for (const auto& [label, v] : bars) {
      if (!std::isfinite(v)) continue;
      y0 = std::min(y0, v);
      y1 = std::max(y1, v);
    }
    if (y1 - y0 < 1e-12) y1 = y0 + 1.0;
    auto py = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * kPlotH; };
    std::string out = header();
    out += axes(0.0, static_cast<double>(bars.size()), y0, y1, false);
    const double width = kPlotW / std::max<std::size_t>(1, bars.size());
    for (std::size_t i = 0; i < bars.size(); ++i) {
      const auto& [label, v] = bars[i];
      const double x = kLeft + width * static_cast<double>(i);
      if (std::isfinite(v)) {
        const double top = py(std::max(v, 0.0));
        const double height = std::abs(py(v) - py(0.0));
        out += "<rect x=\"" + num(x + width * 0.15) + "\" y=\"" + num(top) + "\" width=\"" + num(width * 0.7) +
               "\" height=\"" + num(height) + "\" fill=\"" + kColors[0] + "\"/>\n";
      }
      out += "<text x=\"" + num(x + width / 2) + "\" y=\"" + num(kTop + kPlotH + 14) +
             "\" font-size=\"9\" text-anchor=\"middle\">" + escape(label) + "</text>\n";
    }
    return out + "</svg>\n";
  }

 private:
  static constexpr double kLeft = 60, kTop = 30, kPlotW = 420, kPlotH = 260;
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

  static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
  }

  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
      }
    }
    return out;
  }

  std::string header() const {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"340\" font-family=\"sans-serif\" "
           "font-size=\"11\">\n<text x=\"" + num(kLeft) + "\" y=\"18\" font-size=\"13\">" + escape(title_) + "</text>\n";
  }

  std::string axes(double x0, double x1, double y0, double y1, bool x_ticks = true) const {
    std::string out = "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" + num(kPlotW) +
                      "\" height=\"" + num(kPlotH) + "\" fill=\"none\" stroke=\"#444\"/>\n";
    auto label = [&](double x, double y, const std::string& text, const char* anchor) {
      out += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\">" + text + "</text>\n";
    };
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", y0);
    label(kLeft - 4, kTop + kPlotH, buf, "end");
    std::snprintf(buf, sizeof buf, "%.3g", y1);
    label(kLeft - 4, kTop + 10, buf, "end");
    if (x_ticks) {
      std::snprintf(buf, sizeof buf, "%.3g", x0);
      label(kLeft, kTop + kPlotH + 14, buf, "middle");
      std::snprintf(buf, sizeof buf, "%.3g", x1);
      label(kLeft + kPlotW, kTop + kPlotH + 14, buf, "middle");
    }
    label(kLeft + kPlotW / 2, kTop + kPlotH + 30, escape(x_label_), "middle");
    out += "<text x=\"14\" y=\"" + num(kTop + kPlotH / 2) + "\" transform=\"rotate(-90 14 " + num(kTop + kPlotH / 2) +
           ")\" text-anchor=\"middle\">" + escape(y_label_) + "</text>\n";
    return out;
  }

  std::string title_, x_label_, y_label_;
};

inline double cell_number(const io::CsvTable& t, const io::CsvRow& row, const std::string& column) {
  const auto idx = pipeline::detail::locate(t, {column}, "figure table");
  return pipeline::detail::number(row[idx[0]]);
}

inline std::string cell_text(const io::CsvTable& t, const io::CsvRow& row, const std::string& column) {
  return row[pipeline::detail::locate(t, {column}, "figure table")[0]];
}

inline std::string depth_svg(const io::CsvTable& t, const std::string& title, const std::string& y_label) {
  Series multi{"multilingual", {}}, mono{"monolingual", {}};
  for (const auto& row : t.rows) {
    const double mid = cell_number(t, row, "depth_lo") + 0.5 / kDepthBins;
    (cell_text(t, row, "multilingual") == "true" ? multi : mono).points.emplace_back(mid, cell_number(t, row, "mean"));
  }
  return Svg(title, "relative depth", y_label).render({mono, multi}, "line");
}

// --- driver ---------------------------------------------------------------------------

struct ReportFiles {
  std::vector<std::pair<std::string, std::string>> files;  // name, contents
};

/// Builds every figure table and plot from metrics.csv and the analysis directory.
/// `ceilings` (dataset id -> human agreement) is drawn on fig1 only when a manifest supplies one.
inline ReportFiles build_report(const fs::path& metrics_csv, const fs::path& analysis_dir,
                                const std::map<std::string, double>& ceilings = {}) {
  if (!fs::is_directory(analysis_dir)) {
    fail(ErrorKind::MissingAnalysis, "analysis directory not found: " + analysis_dir.string());
  }
  const fs::path ladder_path = analysis_dir / "ladder.csv";
  if (!fs::exists(ladder_path)) fail(ErrorKind::MissingAnalysis, "ladder.csv not found in " + analysis_dir.string());
  const auto layers = pipeline::read_layer_records(metrics_csv);

  ReportFiles out;
  auto add = [&](const std::string& name, const io::CsvTable& table, std::string svg) {
    out.files.emplace_back(name + ".csv", io::format_csv(table));
    out.files.emplace_back(name + ".svg", std::move(svg));
  };

  const auto fig1 = fig1_table(layers);
  {
    Series multi{"multilingual", {}}, mono{"monolingual", {}};
    for (const auto& row : fig1.rows) {
      (cell_text(fig1, row, "multilingual") == "true" ? multi : mono)
          .points.emplace_back(cell_number(fig1, row, "log_params"), cell_number(fig1, row, "max_r2"));
    }
    std::vector<std::pair<std::string, double>> refs;
    io::CsvTable ceiling_table{{"dataset", "agreement_ceiling"}, {}};
    for (const auto& [dataset, value] : ceilings) {
      refs.emplace_back(dataset + " agreement", value);
      ceiling_table.rows.push_back({dataset, io::format_double(value)});
    }
    add("fig1_max_r2_by_size", fig1,
        Svg("Best-layer R2 by model size", "log parameters", "max R2").render({mono, multi}, "scatter", refs));
    if (!ceilings.empty()) out.files.emplace_back("agreement_ceilings.csv", io::format_csv(ceiling_table));
  }
  const auto fig2a = fig2a_table(layers);
  add("fig2a_isotropy_by_depth", fig2a, depth_svg(fig2a, "Centered isotropy by depth", "mean CI"));
  const auto fig2b = fig2b_table(layers);
  add("fig2b_attention_by_depth", fig2b, depth_svg(fig2b, "Max attention to cue by depth", "max attention"));

  const auto fig3 = fig3_table(io::read_csv(ladder_path));
  {
    std::vector<std::pair<std::string, double>> bars;
    for (const auto& row : fig3.rows) bars.emplace_back(row[0], cell_number(fig3, row, "delta_aic"));
    add("fig3_aic_ladder", fig3, Svg("AIC relative to Baseline", "model", "delta AIC").render_bars(bars));
  }
  const auto fig4 = fig4_table(layers);
  {
    std::vector<std::pair<std::string, double>> bars;
    for (const auto& row : fig4.rows) {
      const std::string who = cell_text(fig4, row, "multilingual") == "true" ? "multi" : "mono";
      bars.emplace_back(who + " " + cell_text(fig4, row, "language"), cell_number(fig4, row, "target_tokens_mean"));
    }
    add("fig4_token_fertility", fig4, Svg("Target-word tokens", "group", "mean tokens").render_bars(bars));
  }
  return out;
}

/// Writes the report into `dir` via a staging directory, so a failure leaves no partial output.
inline void write_report(const ReportFiles& report, const fs::path& dir) {
  const fs::path staging = dir.string() + ".partial";
  std::error_code ec;
  fs::remove_all(staging, ec);
  fs::create_directories(staging);
  for (const auto& [name, contents] : report.files) io::write_file_atomic(staging / name, contents);
  fs::remove_all(dir, ec);
  fs::rename(staging, dir);
}

}  // namespace polyprobe::report
