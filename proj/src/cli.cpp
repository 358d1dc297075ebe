#include "synthgap/cli.hpp"

#include <algorithm>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "synthgap/analysis.hpp"
#include "synthgap/config.hpp"
#include "synthgap/lab.hpp"

namespace synthgap {

namespace {

using json = nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;
constexpr int kExitPartial = 4;

std::vector<int> parse_n_spec(const std::string& s, int units) {
    if (s.empty()) {
        std::vector<int> all(units + 1);
        for (int i = 0; i <= units; ++i) all[i] = i;
        return all;
    }
    std::vector<int> out;
    const size_t dots = s.find("..");
    if (dots != std::string::npos) {
        const int lo = std::stoi(s.substr(0, dots));
        const int hi = std::stoi(s.substr(dots + 2));
        if (hi < lo) throw ValidationError("--n: bad range '" + s + "'");
        for (int i = lo; i <= hi; ++i) out.push_back(i);
        return out;
    }
    for (const auto& tok : split_csv_line(s)) out.push_back(std::stoi(tok));
    return out;
}

std::vector<double> parse_fractions(const std::string& s) {
    std::vector<double> out;
    for (const auto& tok : split_csv_line(s)) out.push_back(parse_double(tok));
    return out;
}

double mean_top1(const std::vector<SweepRow>& rows, const std::string& prefix) {
    double sum = 0;
    int n = 0;
    for (const auto& r : rows) {
        if (r.status == "complete" && r.param.rfind(prefix, 0) == 0) {
            sum += r.stats.top1_mean;
            ++n;
        }
    }
    return n > 0 ? sum / n : 0.0;
}

void print_sweep(const SweepResult& sweep) {
    std::cout << "protocol            param                 top1          top5     status\n";
    for (const auto& r : sweep.rows) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-19s %-20s %6.4f±%.4f %6.4f±%.4f %s",
                      r.protocol.c_str(), r.param.c_str(), r.stats.top1_mean, r.stats.top1_std,
                      r.stats.top5_mean, r.stats.top5_std, r.status.c_str());
        std::cout << line << "\n";
    }
}

double run_summary_loss(const fs::path& ws, const std::string& run_dir) {
    const fs::path p = ws / run_dir / ".." / "summary.json";
    const fs::path q = ws / run_dir / "summary.json";
    const fs::path path = fs::exists(q) ? q : p;
    if (!fs::exists(path)) return 0.0;
    json j = json::parse(read_text_file(path));
    return j.value("train_loss_last_k", 0.0);
}

ReportTable table_from_sweep(const fs::path& ws, const SweepResult& sweep) {
    ReportTable table;
    for (const auto& r : sweep.rows) {
        ReportRow row;
        row.experiment = r.protocol + "/" + r.param;
        row.top1_mean = r.stats.top1_mean;
        row.top1_std = r.stats.top1_std;
        row.top5_mean = r.stats.top5_mean;
        row.top5_std = r.stats.top5_std;
        row.train_loss = r.status == "complete" ? run_summary_loss(ws, r.run_dir) : 0.0;
        row.run_dir = r.run_dir;
        table.rows.push_back(row);
    }
    return table;
}

struct CliOptions {
    std::string config_path;
    std::optional<uint64_t> seed;
    int jobs = 1;
    bool force = false;
};

ExperimentConfig load_effective_config(const CliOptions& opt) {
    ExperimentConfig cfg;
    if (!opt.config_path.empty()) cfg = load_config(opt.config_path);
    if (opt.seed) cfg.master_seed = *opt.seed;
    return cfg;
}

TransferLab make_lab(const ExperimentConfig& cfg, const CliOptions& opt) {
    TransferLab lab(resolve_workspace(cfg), architecture(cfg), train_config(cfg),
                    real_dataset_spec(cfg), cfg.fidelity, cfg.master_seed);
    lab.jobs = opt.jobs;
    lab.force = opt.force;
    lab.retrain_epochs = cfg.retrain_epochs;
    lab.verbose = true;
    if (opt.jobs > 1) Eigen::setNbThreads(1);
    return lab;
}

int cmd_generate(const ExperimentConfig& cfg, const CliOptions& opt) {
    TransferLab lab = make_lab(cfg, opt);
    lab.generate_datasets();
    for (const std::string id : {"real", "proxy"}) {
        const Dataset& ds = lab.dataset(id);
        const auto& m = ds.manifest();
        std::cout << id << ": " << m.train_count << " train / " << m.val_count << " val, "
                  << m.spec.image_size << "x" << m.spec.image_size
                  << ", distribution=" << to_string(m.spec.distribution)
                  << ", fidelity=" << format_double(m.spec.fidelity) << "\n  mean=("
                  << format_sig(m.train_stats.mean[0], 4) << ", "
                  << format_sig(m.train_stats.mean[1], 4) << ", "
                  << format_sig(m.train_stats.mean[2], 4) << ") std=("
                  << format_sig(m.train_stats.std[0], 4) << ", "
                  << format_sig(m.train_stats.std[1], 4) << ", "
                  << format_sig(m.train_stats.std[2], 4) << ")\n";
    }
    return kExitOk;
}

void write_protocol_config(TransferLab& lab, const ExperimentConfig& cfg,
                           const std::string& protocol) {
    ExperimentConfig echoed = cfg;
    echoed.workspace = lab.workspace().generic_string();
    echoed.dataset_seed = lab.real_spec().seed;
    echoed.kind = protocol;
    fs::create_directories(lab.runs_dir() / protocol);
    write_text_file(lab.runs_dir() / protocol / "config.toml", materialize_config(echoed));
}

int cmd_run(const ExperimentConfig& cfg, const CliOptions& opt, const std::string& what,
            const std::string& n_spec, const std::string& fractions_spec) {
    TransferLab lab = make_lab(cfg, opt);
    SweepResult sweep;

    if (what == "baseline") {
        write_protocol_config(lab, cfg, "baseline");
        for (const std::string id : {"real", "proxy"}) {
            for (int rep = 0; rep < cfg.repeats; ++rep) {
                RunResult r = lab.baseline(id, rep);
                SweepRow row{r.spec.protocol, r.spec.param, r.spec.seed, r.stats, r.status,
                             fs::relative(r.dir, lab.workspace()).generic_string()};
                sweep.rows.push_back(row);
            }
        }
        write_sweep_csv(sweep, lab.runs_dir() / "baseline" / "sweep.csv");
        print_sweep(sweep);
        const double gap =
            (mean_top1(sweep.rows, "real_") - mean_top1(sweep.rows, "proxy_")) * 100.0;
        std::cout << "accuracy gap (real - synth, real val top-1): " << format_sig(gap, 4)
                  << " pp\n";
    } else if (what == "transfer-sweep") {
        const Direction dir = direction_from_string(cfg.direction);
        std::vector<int> n_list = cfg.n_list;
        if (!n_spec.empty() || n_list.empty())
            n_list = parse_n_spec(n_spec, architecture(cfg).units());
        write_protocol_config(lab, cfg, "transfer-sweep");
        sweep = lab.run_transfer_sweep(dir, n_list);
        print_sweep(sweep);
    } else if (what == "reduce-sweep") {
        std::vector<double> fractions = cfg.fractions;
        if (!fractions_spec.empty()) fractions = parse_fractions(fractions_spec);
        const bool pretrained = cfg.arms == "both" || cfg.arms == "pretrained";
        const bool scratch = cfg.arms == "both" || cfg.arms == "scratch";
        if (!pretrained && !scratch)
            throw ValidationError("protocol.arms must be both|pretrained|scratch");
        write_protocol_config(lab, cfg, "reduce-sweep");
        sweep = lab.run_data_reduction_sweep(fractions, pretrained, scratch, cfg.repeats);
        print_sweep(sweep);
    } else if (what == "ablate") {
        const AblationKind kind = ablation_from_string(cfg.ablation);
        write_protocol_config(lab, cfg, "ablate-" + cfg.ablation);
        sweep = lab.run_ablation(kind, cfg.patch_size, cfg.fidelity_grid);
        print_sweep(sweep);
    } else {
        throw ValidationError("unknown run protocol '" + what +
                              "' (expected baseline|transfer-sweep|reduce-sweep|ablate)");
    }
    return sweep.all_complete() ? kExitOk : kExitPartial;
}

int cmd_report(const ExperimentConfig& cfg, const CliOptions& opt, bool print_fit) {
    const fs::path ws = resolve_workspace(cfg);
    const fs::path runs = ws / "runs";
    const fs::path reports = ws / "reports";

    std::vector<std::string> protocols;
    if (fs::exists(runs)) {
        for (const auto& entry : fs::directory_iterator(runs)) {
            if (entry.is_directory() && fs::exists(entry.path() / "sweep.csv"))
                protocols.push_back(entry.path().filename().string());
        }
    }
    std::sort(protocols.begin(), protocols.end());
    if (protocols.empty()) throw ValidationError("no completed sweeps under " + runs.string());
    fs::create_directories(reports);

    for (const std::string& protocol : protocols) {
        SweepResult sweep = read_sweep_csv(runs / protocol / "sweep.csv");
        emit_csv(table_from_sweep(ws, sweep), reports / (protocol + ".csv"));

        if (protocol.rfind("transfer-", 0) == 0) {
            PlotSeries series{"top-1 (" + protocol.substr(9) + ")", {}};
            PlotOptions options;
            options.title = "Layer transfer: accuracy vs transferred prefix";
            options.x_label = "N transferred units";
            options.y_label = "real-val top-1";
            for (const auto& r : sweep.rows) {
                if (r.status != "complete") continue;
                if (r.param.rfind("baseline_", 0) == 0) {
                    options.baselines.emplace_back(r.param, r.stats.top1_mean);
                } else if (r.param.size() > 1 && r.param[0] == 'N') {
                    series.points.push_back(
                        {static_cast<double>(std::stoi(r.param.substr(1))), r.stats.top1_mean});
                }
            }
            std::sort(series.points.begin(), series.points.end(),
                      [](const XY& a, const XY& b) { return a.x < b.x; });
            if (!series.points.empty())
                emit_plot_svg({series}, options, reports / (protocol + ".svg"));
        } else if (protocol == "reduce") {
            // mean over repeats per (fraction, arm); x is the reduction factor
            std::map<std::string, std::map<double, std::pair<double, int>>> arms;
            for (const auto& r : sweep.rows) {
                if (r.status != "complete") continue;
                const size_t f_end = r.param.find('_');
                if (r.param.empty() || r.param[0] != 'f' || f_end == std::string::npos) continue;
                const double fraction = parse_double(r.param.substr(1, f_end - 1));
                const size_t arm_end = r.param.find("_r", f_end);
                const std::string arm = r.param.substr(f_end + 1, arm_end - f_end - 1);
                auto& cell = arms[arm][1.0 / fraction];
                cell.first += r.stats.top1_mean;
                cell.second += 1;
            }
            std::vector<PlotSeries> series;
            std::optional<CurveFit> fit;
            for (const auto& [arm, cells] : arms) {
                PlotSeries s{arm == "pretrained" ? "synthetic-pretrained prefix" : "from scratch",
                             {}};
                for (const auto& [x, cell] : cells)
                    s.points.push_back({x, cell.first / cell.second});
                if (arm == "pretrained" && s.points.size() >= 2) {
                    std::vector<XY> pts = s.points;
                    fit = fit_log_curve(pts);
                }
                series.push_back(std::move(s));
            }
            if (!series.empty()) {
                PlotOptions options;
                options.title = "Data reduction: accuracy vs reduction factor";
                options.x_label = "reduction factor";
                options.y_label = "real-val top-1";
                if (fit) {
                    options.has_fit = true;
                    options.fit = *fit;
                }
                emit_plot_svg(series, options, reports / "reduction_linear.svg");
                options.log_x = true;
                emit_plot_svg(series, options, reports / "reduction_log.svg");
            }
            if (fit) {
                json fj{{"a", fit->a}, {"b", fit->b}, {"rms", fit->rms_residual},
                        {"n", fit->n_points}};
                write_text_file(reports / "fit.json", fj.dump(2) + "\n");
                if (print_fit)
                    std::cout << "fit: a=" << format_double(fit->a) << " b=" << format_double(fit->b)
                              << " rms=" << format_double(fit->rms_residual) << "\n";
            }
        } else if (protocol == "baseline") {
            const double gap =
                (mean_top1(sweep.rows, "real_") - mean_top1(sweep.rows, "proxy_")) * 100.0;
            std::cout << "baseline gap (real - synth): " << format_sig(gap, 4) << " pp\n";
        }
    }
    std::cout << "reports written to " << reports.string() << "\n";
    return kExitOk;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"synthgap: synthetic-to-real transfer-learning laboratory"};
    app.require_subcommand(1);

    CliOptions opt;
    uint64_t seed_value = 0;
    app.add_option("--config", opt.config_path, "experiment config (TOML)");
    auto* seed_opt = app.add_option("--seed", seed_value, "master seed override");
    app.add_option("--jobs", opt.jobs, "max concurrent sweep points")->check(CLI::Range(1, 64));
    app.add_flag("--force", opt.force, "overwrite existing datasets/runs");

    auto* gen = app.add_subcommand("generate", "generate the paired real/proxy datasets");
    double fidelity_override = -1;
    gen->add_option("--fidelity", fidelity_override, "proxy fidelity override");

    auto* run = app.add_subcommand("run", "execute a protocol");
    std::string what, n_spec, fractions_spec;
    run->add_option("protocol", what, "baseline|transfer-sweep|reduce-sweep|ablate")->required();
    std::string direction_override, arms_override, ablation_override;
    run->add_option("--direction", direction_override, "real-to-synth|synth-to-real");
    run->add_option("--n", n_spec, "transfer N list, e.g. 0..10 or 0,4,9");
    run->add_option("--fractions", fractions_spec, "reduction fractions, e.g. 1,0.5,0.25");
    run->add_option("--arms", arms_override, "both|pretrained|scratch");
    run->add_option("--ablation", ablation_override,
                    "normalization|augmentation|texture|fidelity");
    int repeats_override = 0;
    run->add_option("--repeats", repeats_override, "seeds per point");

    auto* report = app.add_subcommand("report", "emit CSV tables and SVG plots");
    bool print_fit = false;
    report->add_flag("--fit", print_fit, "print the log-curve fit coefficients");

    try {
        app.parse(argc, const_cast<char**>(argv));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (*seed_opt) opt.seed = seed_value;
        ExperimentConfig cfg = load_effective_config(opt);
        if (gen->parsed()) {
            if (fidelity_override >= 0) cfg.fidelity = fidelity_override;
            return cmd_generate(cfg, opt);
        }
        if (run->parsed()) {
            if (!direction_override.empty()) cfg.direction = direction_override;
            if (!arms_override.empty()) cfg.arms = arms_override;
            if (!ablation_override.empty()) cfg.ablation = ablation_override;
            if (repeats_override > 0) cfg.repeats = repeats_override;
            return cmd_run(cfg, opt, what, n_spec, fractions_spec);
        }
        if (report->parsed()) return cmd_report(cfg, opt, print_fit);
        return kExitValidation;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const NotFoundError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace synthgap
