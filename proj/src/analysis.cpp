#include "synthgap/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace synthgap {

CurveFit fit_log_curve(const std::vector<XY>& points) {
    if (points.size() < 2)
        throw ValidationError("fit_log_curve: need at least 2 points");
    for (const auto& p : points)
        if (!(p.x > 0)) throw ValidationError("fit_log_curve: x values must be > 0");

    const double n = static_cast<double>(points.size());
    double u_mean = 0, y_mean = 0;
    for (const auto& p : points) {
        u_mean += std::log(p.x);
        y_mean += p.y;
    }
    u_mean /= n;
    y_mean /= n;
    double suu = 0, suy = 0;
    for (const auto& p : points) {
        const double du = std::log(p.x) - u_mean;
        suu += du * du;
        suy += du * (p.y - y_mean);
    }
    if (suu == 0)
        throw DegenerateDesignError("fit_log_curve: all x values are equal");

    CurveFit fit;
    fit.a = suy / suu;
    fit.b = y_mean - fit.a * u_mean;
    fit.n_points = static_cast<int>(points.size());
    double ss = 0;
    for (const auto& p : points) {
        const double r = p.y - (fit.a * std::log(p.x) + fit.b);
        ss += r * r;
    }
    fit.rms_residual = std::sqrt(ss / n);
    return fit;
}

double compute_gap(const SummaryStats& real_stats, const SummaryStats& synth_stats) {
    return (real_stats.top1_mean - synth_stats.top1_mean) * 100.0;
}

void emit_csv(const ReportTable& table, const fs::path& path) {
    if (table.rows.empty()) throw ValidationError("emit_csv: empty table");
    std::string out = "experiment,top1_mean,top1_std,top5_mean,top5_std,train_loss,run_dir\n";
    for (const auto& r : table.rows) {
        out += r.experiment + "," + format_sig(r.top1_mean, 6) + "," + format_sig(r.top1_std, 6) +
               "," + format_sig(r.top5_mean, 6) + "," + format_sig(r.top5_std, 6) + "," +
               format_sig(r.train_loss, 6) + "," + r.run_dir + "\n";
    }
    write_text_file(path, out);
}

ReportTable read_report_csv(const fs::path& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line) ||
        line != "experiment,top1_mean,top1_std,top5_mean,top5_std,train_loss,run_dir")
        throw FormatError(path.string() + ": bad report header");
    ReportTable table;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 7) throw FormatError(path.string() + ": bad report row");
        ReportRow r;
        r.experiment = f[0];
        r.top1_mean = parse_double(f[1]);
        r.top1_std = parse_double(f[2]);
        r.top5_mean = parse_double(f[3]);
        r.top5_std = parse_double(f[4]);
        r.train_loss = parse_double(f[5]);
        r.run_dir = f[6];
        table.rows.push_back(r);
    }
    return table;
}

namespace {

// fixed canvas; data mapped into the inner plot rectangle
constexpr double kWidth = 640, kHeight = 480;
constexpr double kLeft = 72, kRight = 616, kTop = 48, kBottom = 428;

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string fmt_px(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 2);
    return std::string(buf, res.ptr);
}

struct AxisMap {
    double lo, hi, px_lo, px_hi;
    bool log_scale;
    double to_px(double v) const {
        double t = log_scale ? std::log(v) : v;
        double a = log_scale ? std::log(lo) : lo;
        double b = log_scale ? std::log(hi) : hi;
        if (b == a) return 0.5 * (px_lo + px_hi);
        return px_lo + (t - a) / (b - a) * (px_hi - px_lo);
    }
};

}  // namespace

void emit_plot_svg(const std::vector<PlotSeries>& series, const PlotOptions& options,
                   const fs::path& path) {
    if (series.empty()) throw ValidationError("emit_plot_svg: no series");
    for (const auto& s : series)
        if (s.points.empty()) throw ValidationError("emit_plot_svg: empty series '" + s.label + "'");

    double x_lo = series[0].points[0].x, x_hi = x_lo;
    double y_lo = series[0].points[0].y, y_hi = y_lo;
    for (const auto& s : series) {
        for (const auto& p : s.points) {
            x_lo = std::min(x_lo, p.x);
            x_hi = std::max(x_hi, p.x);
            y_lo = std::min(y_lo, p.y);
            y_hi = std::max(y_hi, p.y);
        }
    }
    for (const auto& [label, y] : options.baselines) {
        y_lo = std::min(y_lo, y);
        y_hi = std::max(y_hi, y);
    }
    if (x_hi == x_lo) {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    if (y_hi == y_lo) {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    // pad the y range so lines stay off the frame
    const double y_pad = 0.05 * (y_hi - y_lo);
    y_lo -= y_pad;
    y_hi += y_pad;
    if (options.log_x && !(x_lo > 0))
        throw ValidationError("emit_plot_svg: log axis requires positive x");

    AxisMap xm{x_lo, x_hi, kLeft, kRight, options.log_x};
    AxisMap ym{y_lo, y_hi, kBottom, kTop, false};

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" +
           fmt_px(kWidth) + "\" height=\"" + fmt_px(kHeight) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + fmt_px(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"15\">" + options.title + "</text>\n";

    // axes
    svg += "<line x1=\"" + fmt_px(kLeft) + "\" y1=\"" + fmt_px(kBottom) + "\" x2=\"" +
           fmt_px(kRight) + "\" y2=\"" + fmt_px(kBottom) + "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + fmt_px(kLeft) + "\" y1=\"" + fmt_px(kTop) + "\" x2=\"" + fmt_px(kLeft) +
           "\" y2=\"" + fmt_px(kBottom) + "\" stroke=\"black\"/>\n";

    // 5 ticks per axis
    for (int i = 0; i <= 4; ++i) {
        const double fx = x_lo + (x_hi - x_lo) * i / 4.0;
        const double tx = options.log_x ? std::exp(std::log(x_lo) + (std::log(x_hi) - std::log(x_lo)) * i / 4.0)
                                        : fx;
        const double px = xm.to_px(tx);
        svg += "<line x1=\"" + fmt_px(px) + "\" y1=\"" + fmt_px(kBottom) + "\" x2=\"" + fmt_px(px) +
               "\" y2=\"" + fmt_px(kBottom + 5) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + fmt_px(px) + "\" y=\"" + fmt_px(kBottom + 20) +
               "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
               format_sig(tx, 4) + "</text>\n";
        const double ty = y_lo + (y_hi - y_lo) * i / 4.0;
        const double py = ym.to_px(ty);
        svg += "<line x1=\"" + fmt_px(kLeft - 5) + "\" y1=\"" + fmt_px(py) + "\" x2=\"" +
               fmt_px(kLeft) + "\" y2=\"" + fmt_px(py) + "\" stroke=\"black\"/>\n";
        svg += "<text x=\"" + fmt_px(kLeft - 8) + "\" y=\"" + fmt_px(py + 4) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
               format_sig(ty, 4) + "</text>\n";
    }
    svg += "<text x=\"" + fmt_px((kLeft + kRight) / 2) + "\" y=\"" + fmt_px(kHeight - 12) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
           options.x_label + "</text>\n";
    svg += "<text x=\"18\" y=\"" + fmt_px((kTop + kBottom) / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
           "transform=\"rotate(-90 18 " + fmt_px((kTop + kBottom) / 2) + ")\">" +
           options.y_label + "</text>\n";

    // baselines as dashed horizontal <line> elements
    for (size_t i = 0; i < options.baselines.size(); ++i) {
        const auto& [label, y] = options.baselines[i];
        const double py = ym.to_px(y);
        svg += "<line x1=\"" + fmt_px(kLeft) + "\" y1=\"" + fmt_px(py) + "\" x2=\"" +
               fmt_px(kRight) + "\" y2=\"" + fmt_px(py) +
               "\" stroke=\"#888888\" stroke-dasharray=\"6 3\"/>\n";
        svg += "<text x=\"" + fmt_px(kRight - 4) + "\" y=\"" + fmt_px(py - 4) +
               "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\" "
               "fill=\"#555555\">" + label + "</text>\n";
    }

    // fitted curve overlay as a dashed <path>, sampled at 64 x positions
    if (options.has_fit) {
        std::string d;
        for (int i = 0; i <= 63; ++i) {
            const double t = static_cast<double>(i) / 63.0;
            const double x = options.log_x
                                 ? std::exp(std::log(x_lo) + (std::log(x_hi) - std::log(x_lo)) * t)
                                 : x_lo + (x_hi - x_lo) * t;
            if (!(x > 0)) continue;
            const double y = options.fit.a * std::log(x) + options.fit.b;
            const double py = std::clamp(ym.to_px(y), kTop, kBottom);
            d += (d.empty() ? "M" : " L") + fmt_px(xm.to_px(x)) + " " + fmt_px(py);
        }
        svg += "<path d=\"" + d + "\" fill=\"none\" stroke=\"#444444\" "
               "stroke-dasharray=\"3 3\"/>\n";
    }

    // one <polyline> per series (tests key off this element count)
    for (size_t si = 0; si < series.size(); ++si) {
        const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
        std::string pts;
        for (const auto& p : series[si].points) {
            if (!pts.empty()) pts += " ";
            pts += fmt_px(xm.to_px(p.x)) + "," + fmt_px(ym.to_px(p.y));
        }
        svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
               "\" stroke-width=\"1.5\"/>\n";
        for (const auto& p : series[si].points) {
            svg += "<circle cx=\"" + fmt_px(xm.to_px(p.x)) + "\" cy=\"" + fmt_px(ym.to_px(p.y)) +
                   "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
        }
        // legend entry
        const double ly = kTop + 16 + 16 * static_cast<double>(si);
        svg += "<rect x=\"" + fmt_px(kLeft + 10) + "\" y=\"" + fmt_px(ly - 8) +
               "\" width=\"10\" height=\"10\" fill=\"" + std::string(color) + "\"/>\n";
        svg += "<text x=\"" + fmt_px(kLeft + 26) + "\" y=\"" + fmt_px(ly + 1) +
               "\" font-family=\"sans-serif\" font-size=\"11\">" + series[si].label + "</text>\n";
    }
    svg += "</svg>\n";
    write_text_file(path, svg);
}

}  // namespace synthgap
