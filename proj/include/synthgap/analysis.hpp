#pragma once

#include <string>
#include <vector>

#include "synthgap/io.hpp"
#include "synthgap/trainer.hpp"

namespace synthgap {

// Ordinary least squares of y on ln(x): y ~ a*ln(x) + b.
struct CurveFit {
    double a = 0;  // slope vs ln(x)
    double b = 0;  // intercept
    double rms_residual = 0;
    int n_points = 0;
};

struct XY {
    double x, y;
};

// Closed-form normal equations on mean-centered coordinates; throws
// ValidationError for x <= 0 or fewer than 2 points, DegenerateDesignError
// when all x coincide.
CurveFit fit_log_curve(const std::vector<XY>& points);

// (real top-1 mean - synth top-1 mean) * 100, signed percentage points.
double compute_gap(const SummaryStats& real_stats, const SummaryStats& synth_stats);

// One labeled row per experiment, mirroring the paper-style result tables.
struct ReportRow {
    std::string experiment;
    double top1_mean = 0, top1_std = 0;
    double top5_mean = 0, top5_std = 0;
    double train_loss = 0;
    std::string run_dir;
};

struct ReportTable {
    std::vector<ReportRow> rows;
};

// header: experiment,top1_mean,top1_std,top5_mean,top5_std,train_loss,run_dir
// values formatted with 6 significant digits (documented contract).
void emit_csv(const ReportTable& table, const fs::path& path);
ReportTable read_report_csv(const fs::path& path);

struct PlotSeries {
    std::string label;
    std::vector<XY> points;
};

struct PlotOptions {
    std::string title, x_label, y_label;
    bool log_x = false;
    bool has_fit = false;
    CurveFit fit;  // drawn as a dashed overlay when has_fit
    std::vector<std::pair<std::string, double>> baselines;  // horizontal lines
};

// Standalone deterministic SVG 1.1 line chart; one <polyline> per series.
void emit_plot_svg(const std::vector<PlotSeries>& series, const PlotOptions& options,
                   const fs::path& path);

}  // namespace synthgap
