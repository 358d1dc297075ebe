#include "synthgap/lab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "synthgap/rng.hpp"

namespace synthgap {

using json = nlohmann::json;

namespace {
constexpr uint64_t kInitSalt = 0x696e6974ULL;
constexpr uint64_t kTrainSalt = 0x747261696eULL;
constexpr uint64_t kReinitSalt = 0x7265696e6974ULL;
constexpr uint64_t kFracSalt = 0x66726163ULL;
constexpr uint64_t kScrambleSalt = 0x73637261ULL;

std::string sanitize_status(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

std::string format_n(int n) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "N%02d", n);
    return buf;
}

}  // namespace

std::string to_string(Direction d) {
    return d == Direction::RealToSynth ? "real-to-synth" : "synth-to-real";
}

Direction direction_from_string(const std::string& s) {
    if (s == "real-to-synth") return Direction::RealToSynth;
    if (s == "synth-to-real") return Direction::SynthToReal;
    throw ValidationError("unknown direction: '" + s + "'");
}

std::string to_string(AblationKind k) {
    switch (k) {
        case AblationKind::Normalization: return "normalization";
        case AblationKind::Augmentation: return "augmentation";
        case AblationKind::Texture: return "texture";
        case AblationKind::Fidelity: return "fidelity";
    }
    return "normalization";
}

AblationKind ablation_from_string(const std::string& s) {
    if (s == "normalization") return AblationKind::Normalization;
    if (s == "augmentation") return AblationKind::Augmentation;
    if (s == "texture") return AblationKind::Texture;
    if (s == "fidelity") return AblationKind::Fidelity;
    throw ValidationError("unknown ablation kind: '" + s + "'");
}

bool SweepResult::all_complete() const {
    for (const auto& r : rows)
        if (r.status != "complete") return false;
    return true;
}

// ---------------------------------------------------------------------------
// RunSpec serialization

namespace {

json selector_to_json(const DataSelector& s) {
    return json{{"dataset_id", s.dataset_id},
                {"fraction", s.fraction},
                {"fraction_seed", s.fraction_seed},
                {"scramble_patch", s.scramble_patch},
                {"scramble_seed", s.scramble_seed}};
}

DataSelector selector_from_json(const json& j) {
    DataSelector s;
    s.dataset_id = j.at("dataset_id").get<std::string>();
    s.fraction = j.at("fraction").get<double>();
    s.fraction_seed = j.at("fraction_seed").get<uint64_t>();
    s.scramble_patch = j.at("scramble_patch").get<int>();
    s.scramble_seed = j.at("scramble_seed").get<uint64_t>();
    return s;
}

json run_spec_to_json_obj(const RunSpec& spec) {
    return json{
        {"protocol", spec.protocol},
        {"param", spec.param},
        {"seed", spec.seed},
        {"eval_dataset_id", spec.eval_dataset_id},
        {"train_data", selector_to_json(spec.train_data)},
        {"arch",
         {{"stage_widths", spec.arch.stage_widths},
          {"blocks_per_stage", spec.arch.blocks_per_stage},
          {"num_categories", spec.arch.num_categories},
          {"head_temperature", spec.arch.head_temperature}}},
        {"train_cfg",
         {{"epochs", spec.train_cfg.epochs},
          {"batch_size", spec.train_cfg.batch_size},
          {"base_lr", spec.train_cfg.base_lr},
          {"warmup_epochs", spec.train_cfg.warmup_epochs},
          {"momentum", spec.train_cfg.momentum},
          {"weight_decay", spec.train_cfg.weight_decay},
          {"augmentation", to_string(spec.train_cfg.augmentation)},
          {"normalization", to_string(spec.train_cfg.normalization)},
          {"bn_eval_update", spec.train_cfg.bn_eval_update},
          {"seed", spec.train_cfg.seed}}},
        {"init",
         {{"kind", spec.init.kind == InitSpec::Kind::Fresh ? "fresh" : "transfer"},
          {"init_seed", spec.init.init_seed},
          {"checkpoint", spec.init.checkpoint},
          {"freeze_n", spec.init.freeze_n},
          {"reinit_seed", spec.init.reinit_seed}}},
    };
}

RunSpec run_spec_from_json_obj(const json& j) {
    RunSpec spec;
    spec.protocol = j.at("protocol").get<std::string>();
    spec.param = j.at("param").get<std::string>();
    spec.seed = j.at("seed").get<uint64_t>();
    spec.eval_dataset_id = j.at("eval_dataset_id").get<std::string>();
    spec.train_data = selector_from_json(j.at("train_data"));
    const json& a = j.at("arch");
    spec.arch.stage_widths = a.at("stage_widths").get<std::vector<int>>();
    spec.arch.blocks_per_stage = a.at("blocks_per_stage").get<int>();
    spec.arch.num_categories = a.at("num_categories").get<int>();
    spec.arch.head_temperature = a.at("head_temperature").get<double>();
    const json& t = j.at("train_cfg");
    spec.train_cfg.epochs = t.at("epochs").get<int>();
    spec.train_cfg.batch_size = t.at("batch_size").get<int>();
    spec.train_cfg.base_lr = t.at("base_lr").get<double>();
    spec.train_cfg.warmup_epochs = t.at("warmup_epochs").get<double>();
    spec.train_cfg.momentum = t.at("momentum").get<double>();
    spec.train_cfg.weight_decay = t.at("weight_decay").get<double>();
    spec.train_cfg.augmentation = augmentation_from_string(t.at("augmentation").get<std::string>());
    spec.train_cfg.normalization =
        normalization_from_string(t.at("normalization").get<std::string>());
    spec.train_cfg.bn_eval_update = t.at("bn_eval_update").get<bool>();
    spec.train_cfg.seed = t.at("seed").get<uint64_t>();
    const json& i = j.at("init");
    spec.init.kind = i.at("kind").get<std::string>() == "fresh" ? InitSpec::Kind::Fresh
                                                                : InitSpec::Kind::Transfer;
    spec.init.init_seed = i.at("init_seed").get<uint64_t>();
    spec.init.checkpoint = i.at("checkpoint").get<std::string>();
    spec.init.freeze_n = i.at("freeze_n").get<int>();
    spec.init.reinit_seed = i.at("reinit_seed").get<uint64_t>();
    return spec;
}

}  // namespace

std::string run_spec_to_json(const RunSpec& spec) {
    return run_spec_to_json_obj(spec).dump(2) + "\n";
}

RunSpec run_spec_from_json(const std::string& text) {
    try {
        return run_spec_from_json_obj(json::parse(text));
    } catch (const json::exception& e) {
        throw FormatError("bad run config: " + std::string(e.what()));
    }
}

// ---------------------------------------------------------------------------
// sweep.csv

void write_sweep_csv(const SweepResult& sweep, const fs::path& path) {
    std::string out = "protocol,param,seed,top1_mean,top1_std,top5_mean,top5_std,status\n";
    for (const auto& r : sweep.rows) {
        out += r.protocol + "," + r.param + "," + std::to_string(r.seed) + "," +
               format_sig(r.stats.top1_mean, 6) + "," + format_sig(r.stats.top1_std, 6) + "," +
               format_sig(r.stats.top5_mean, 6) + "," + format_sig(r.stats.top5_std, 6) + "," +
               sanitize_status(r.status) + "\n";
    }
    write_text_file(path, out);
}

SweepResult read_sweep_csv(const fs::path& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line) ||
        line != "protocol,param,seed,top1_mean,top1_std,top5_mean,top5_std,status")
        throw FormatError(path.string() + ": bad sweep header");
    SweepResult sweep;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 8) throw FormatError(path.string() + ": bad sweep row");
        SweepRow r;
        r.protocol = f[0];
        r.param = f[1];
        r.seed = std::stoull(f[2]);
        r.stats.top1_mean = parse_double(f[3]);
        r.stats.top1_std = parse_double(f[4]);
        r.stats.top5_mean = parse_double(f[5]);
        r.stats.top5_std = parse_double(f[6]);
        r.status = f[7];
        sweep.rows.push_back(r);
    }
    return sweep;
}

// ---------------------------------------------------------------------------
// TransferLab

TransferLab::TransferLab(fs::path workspace, ArchitectureConfig arch, TrainConfig base_cfg,
                         DatasetSpec real_spec, double proxy_fidelity, uint64_t master_seed)
    : workspace_(std::move(workspace)),
      arch_(std::move(arch)),
      base_cfg_(base_cfg),
      real_spec_(real_spec),
      proxy_fidelity_(proxy_fidelity),
      master_seed_(master_seed) {
    validate(arch_);
    validate(base_cfg_);
    real_spec_.distribution = Distribution::Real;
    real_spec_.fidelity = 1.0;
    validate(real_spec_);
    if (!(proxy_fidelity_ >= 0.0 && proxy_fidelity_ <= 1.0))
        throw ValidationError("proxy fidelity must be in [0,1]");
    if (arch_.num_categories != real_spec_.num_categories)
        throw ValidationError("architecture and dataset category counts differ");
}

void TransferLab::generate_datasets() {
    struct Item {
        const char* id;
        Distribution dist;
        double fidelity;
    };
    const Item items[] = {{"real", Distribution::Real, 1.0},
                          {"proxy", Distribution::Proxy, proxy_fidelity_}};
    for (const auto& item : items) {
        const fs::path dir = dataset_dir(item.id);
        if (fs::exists(dir)) {
            if (!force)
                throw ValidationError("dataset directory exists: " + dir.string() +
                                      " (pass --force to regenerate)");
            fs::remove_all(dir);
        }
        DatasetSpec spec = real_spec_;
        spec.distribution = item.dist;
        spec.fidelity = item.fidelity;
        generate_dataset(spec, dir);
    }
    std::lock_guard<std::mutex> lock(*mutex_);
    datasets_.clear();
}

const Dataset& TransferLab::dataset(const std::string& id) {
    std::lock_guard<std::mutex> lock(*mutex_);
    auto it = datasets_.find(id);
    if (it != datasets_.end()) return it->second;
    const fs::path dir = dataset_dir(id);
    if (!fs::exists(dir / "manifest.json")) {
        // fidelity variants are derived deterministically on demand
        if (id.rfind("proxy_f", 0) == 0) {
            const double phi = parse_double(id.substr(7));
            if (!(phi >= 0.0 && phi <= 1.0))
                throw ValidationError("bad fidelity in dataset id '" + id + "'");
            DatasetSpec spec = real_spec_;
            spec.distribution = Distribution::Proxy;
            spec.fidelity = phi;
            generate_dataset(spec, dir);
        } else {
            throw NotFoundError("dataset '" + id + "' not found under " +
                                datasets_dir().string() + " (run `synthgap generate` first)");
        }
    }
    return datasets_.emplace(id, Dataset::open(dir)).first->second;
}

uint64_t TransferLab::point_seed(const std::string& protocol, const std::string& param) const {
    return hash_combine(master_seed_, fnv1a(protocol), fnv1a(param));
}

SampleSet TransferLab::resolve_train(const DataSelector& sel) {
    const Dataset& ds = dataset(sel.dataset_id);
    SampleSet set = SampleSet::train_of(ds);
    if (sel.fraction < 1.0) {
        // the view object owns the index list; SampleSet copies it
        DatasetView view = stratified_reduce(ds, sel.fraction, sel.fraction_seed);
        set = SampleSet::of_view(view);
    }
    if (sel.scramble_patch > 0) set = set.with_scramble(sel.scramble_patch, sel.scramble_seed);
    return set;
}

SampleSet TransferLab::resolve_val(const std::string& dataset_id) {
    return SampleSet::val_of(dataset(dataset_id));
}

TrainConfig TransferLab::retrain_config(uint64_t train_seed) const {
    TrainConfig cfg = base_cfg_;
    if (retrain_epochs > 0) {
        cfg.epochs = retrain_epochs;
        cfg.warmup_epochs = std::min(cfg.warmup_epochs, 0.1 * retrain_epochs);
    }
    cfg.seed = train_seed;
    return cfg;
}

RunResult TransferLab::execute_run(const RunSpec& spec) {
    return execute_run_at(spec, runs_dir() / spec.protocol / spec.param, !force);
}

RunResult TransferLab::replay_run(const fs::path& run_dir, const fs::path& out_dir) {
    RunSpec spec = run_spec_from_json(read_text_file(run_dir / "run_config.json"));
    return execute_run_at(spec, out_dir, /*reuse_cache=*/false);
}

RunResult TransferLab::execute_run_at(const RunSpec& spec, const fs::path& dir,
                                      bool reuse_cache) {
    RunResult result;
    result.spec = spec;
    result.dir = dir;

    const std::string spec_json = run_spec_to_json(spec);
    if (reuse_cache && fs::exists(dir / "summary.json")) {
        const std::string stored = read_text_file(dir / "run_config.json");
        if (stored != spec_json)
            throw ValidationError("completed run at " + dir.string() +
                                  " was produced by a different config");
        json summary = json::parse(read_text_file(dir / "summary.json"));
        result.stats.top1_mean = summary.at("top1_mean").get<double>();
        result.stats.top1_std = summary.at("top1_std").get<double>();
        result.stats.top5_mean = summary.at("top5_mean").get<double>();
        result.stats.top5_std = summary.at("top5_std").get<double>();
        result.stats.k = summary.at("last_k").get<int>();
        result.train_loss_last_k = summary.at("train_loss_last_k").get<double>();
        result.status = summary.at("status").get<std::string>();
        result.log = read_metrics_csv(dir / "metrics.csv");
        result.from_cache = true;
        return result;
    }

    if (fs::exists(dir)) fs::remove_all(dir);  // incomplete or forced
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    write_text_file(dir / "run_config.json", spec_json);

    SampleSet train_set = resolve_train(spec.train_data);
    SampleSet val_set = resolve_val(spec.eval_dataset_id);

    Model model = [&] {
        if (spec.init.kind == InitSpec::Kind::Fresh)
            return build_model(spec.arch, spec.init.init_seed);
        Model m = load_checkpoint(workspace_ / spec.init.checkpoint, spec.arch);
        freeze_prefix(m, spec.init.freeze_n);
        reinit_suffix(m, spec.init.freeze_n, spec.init.reinit_seed);
        return m;
    }();

    result.log = train(model, train_set, val_set, spec.train_cfg);
    write_metrics_csv(result.log, dir / "metrics.csv");
    save_checkpoint(model, dir / "checkpoint_final");

    const int n_epochs = static_cast<int>(result.log.epochs.size());
    const int k = std::min(last_k, std::max(n_epochs, 1));
    if (n_epochs > 0) {
        result.stats = aggregate_last_k(result.log, k);
        double loss = 0;
        for (int i = n_epochs - k; i < n_epochs; ++i) loss += result.log.epochs[i].train_loss;
        result.train_loss_last_k = loss / k;
    }
    result.status = "complete";

    json summary{
        {"protocol", spec.protocol},
        {"param", spec.param},
        {"seed", spec.seed},
        {"status", result.status},
        {"last_k", result.stats.k},
        {"top1_mean", result.stats.top1_mean},
        {"top1_std", result.stats.top1_std},
        {"top5_mean", result.stats.top5_mean},
        {"top5_std", result.stats.top5_std},
        {"train_loss_last_k", result.train_loss_last_k},
        {"config", run_spec_to_json_obj(spec)},
    };
    write_text_file(dir / "summary.json", summary.dump(2) + "\n");
    if (verbose) {
        std::lock_guard<std::mutex> lock(*mutex_);
        std::cout << "[run] " << spec.protocol << "/" << spec.param << "  top1="
                  << format_sig(result.stats.top1_mean, 4) << "\n";
    }
    return result;
}

std::vector<RunResult> TransferLab::execute_many(const std::vector<RunSpec>& specs) {
    std::vector<RunResult> results(specs.size());
    auto run_one = [&](size_t i) {
        try {
            results[i] = execute_run(specs[i]);
        } catch (const std::exception& e) {
            results[i].spec = specs[i];
            results[i].dir = runs_dir() / specs[i].protocol / specs[i].param;
            results[i].status = std::string("failed: ") + e.what();
        }
    };
    if (jobs <= 1 || specs.size() <= 1) {
        for (size_t i = 0; i < specs.size(); ++i) run_one(i);
        return results;
    }
    // open every dataset up front; the per-run path then only reads
    for (const auto& spec : specs) {
        try {
            dataset(spec.train_data.dataset_id);
            dataset(spec.eval_dataset_id);
        } catch (const std::exception&) {
            // surfaced again inside the corresponding run
        }
    }
    std::atomic<size_t> next{0};
    auto worker = [&] {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= specs.size()) break;
            run_one(i);
        }
    };
    std::vector<std::thread> pool;
    const size_t n_threads = std::min(static_cast<size_t>(jobs), specs.size());
    pool.reserve(n_threads);
    for (size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return results;
}

RunResult TransferLab::baseline(const std::string& dataset_id, int rep) {
    const std::string param = dataset_id + "_r" + std::to_string(rep);
    const uint64_t seed = point_seed("baseline", param);
    RunSpec spec;
    spec.protocol = "baseline";
    spec.param = param;
    spec.seed = seed;
    spec.train_data.dataset_id = dataset_id;
    spec.arch = arch_;
    spec.train_cfg = base_cfg_;
    spec.train_cfg.seed = hash_combine(seed, kTrainSalt);
    spec.init.kind = InitSpec::Kind::Fresh;
    spec.init.init_seed = hash_combine(seed, kInitSalt);
    return execute_run(spec);
}

SummaryStats TransferLab::run_transfer_point(const TransferPlan& plan) {
    if (plan.n_transferred < 0 || plan.n_transferred > arch_.units())
        throw ValidationError("run_transfer_point: N out of range [0, " +
                              std::to_string(arch_.units()) + "]");
    RunSpec spec;
    spec.protocol = "transfer-" + to_string(plan.direction);
    spec.param = plan.param.empty() ? format_n(plan.n_transferred) : plan.param;
    spec.seed = point_seed(spec.protocol, spec.param);
    spec.train_data.dataset_id =
        plan.direction == Direction::RealToSynth ? "proxy" : "real";
    spec.arch = arch_;
    spec.train_cfg = plan.retrain_cfg;
    spec.init.kind = InitSpec::Kind::Transfer;
    spec.init.checkpoint = plan.pretrain_checkpoint;
    spec.init.freeze_n = plan.n_transferred;
    spec.init.reinit_seed = plan.reinit_seed;
    return execute_run(spec).stats;
}

SweepResult TransferLab::run_transfer_sweep(Direction direction,
                                            const std::vector<int>& n_list) {
    const std::string protocol = "transfer-" + to_string(direction);
    const std::string pretrain_id =
        direction == Direction::RealToSynth ? "real" : "proxy";
    const std::string retrain_id =
        direction == Direction::RealToSynth ? "proxy" : "real";

    RunResult real_base = baseline("real", 0);
    RunResult proxy_base = baseline("proxy", 0);
    const RunResult& pretrain = pretrain_id == "real" ? real_base : proxy_base;
    const std::string checkpoint_rel =
        fs::path("runs/baseline/" + pretrain_id + "_r0/checkpoint_final").generic_string();
    if (pretrain.status != "complete")
        throw NotFoundError("pretraining run failed: " + pretrain.status);

    std::vector<RunSpec> specs;
    for (int n : n_list) {
        RunSpec spec;
        spec.protocol = protocol;
        spec.param = format_n(n);
        spec.seed = point_seed(protocol, spec.param);
        spec.train_data.dataset_id = retrain_id;
        spec.arch = arch_;
        spec.train_cfg = retrain_config(hash_combine(spec.seed, kTrainSalt));
        spec.init.kind = InitSpec::Kind::Transfer;
        spec.init.checkpoint = checkpoint_rel;
        spec.init.freeze_n = n;
        spec.init.reinit_seed = hash_combine(spec.seed, kReinitSalt);
        specs.push_back(std::move(spec));
    }
    auto results = execute_many(specs);

    SweepResult sweep;
    auto add_row = [&](const RunResult& r, const std::string& param_override = "") {
        SweepRow row;
        row.protocol = r.spec.protocol;
        row.param = param_override.empty() ? r.spec.param : param_override;
        row.seed = r.spec.seed;
        row.stats = r.stats;
        row.status = r.status;
        row.run_dir = fs::relative(r.dir, workspace_).generic_string();
        sweep.rows.push_back(row);
    };
    for (const auto& r : results) add_row(r);
    add_row(real_base, "baseline_real");
    add_row(proxy_base, "baseline_synth");

    fs::create_directories(runs_dir() / protocol);
    write_sweep_csv(sweep, runs_dir() / protocol / "sweep.csv");
    return sweep;
}

SweepResult TransferLab::run_data_reduction_sweep(const std::vector<double>& fractions,
                                                  bool arm_pretrained, bool arm_scratch,
                                                  int repeats) {
    if (fractions.empty())
        throw ValidationError("run_data_reduction_sweep: no fractions");
    for (size_t i = 0; i < fractions.size(); ++i) {
        if (!(fractions[i] > 0.0 && fractions[i] <= 1.0))
            throw ValidationError("run_data_reduction_sweep: fractions must lie in (0,1]");
        if (i > 0 && fractions[i] >= fractions[i - 1])
            throw ValidationError("run_data_reduction_sweep: fractions must be sorted descending");
        if (static_cast<int>(std::floor(fractions[i] * real_spec_.per_category_train)) < 1)
            throw ValidationError("run_data_reduction_sweep: fraction " +
                                  format_double(fractions[i]) +
                                  " leaves an empty category");
    }
    if (!arm_pretrained && !arm_scratch)
        throw ValidationError("run_data_reduction_sweep: no arms selected");

    const std::string protocol = "reduce";
    std::string checkpoint_rel;
    if (arm_pretrained) {
        RunResult pretrain = baseline("proxy", 0);
        if (pretrain.status != "complete")
            throw NotFoundError("synthetic pretraining run failed: " + pretrain.status);
        checkpoint_rel =
            fs::path("runs/baseline/proxy_r0/checkpoint_final").generic_string();
    }

    std::vector<RunSpec> specs;
    const int freeze_n = arch_.units() - 2;  // retrain the last two units
    for (double fraction : fractions) {
        for (int rep = 0; rep < repeats; ++rep) {
            for (int arm = 0; arm < 2; ++arm) {
                if (arm == 0 && !arm_pretrained) continue;
                if (arm == 1 && !arm_scratch) continue;
                RunSpec spec;
                spec.protocol = protocol;
                spec.param = "f" + format_double(fraction) + "_" +
                             (arm == 0 ? "pretrained" : "scratch") + "_r" + std::to_string(rep);
                spec.seed = point_seed(protocol, spec.param);
                spec.train_data.dataset_id = "real";
                spec.train_data.fraction = fraction;
                spec.train_data.fraction_seed = hash_combine(spec.seed, kFracSalt);
                spec.arch = arch_;
                spec.train_cfg = retrain_config(hash_combine(spec.seed, kTrainSalt));
                if (arm == 0) {
                    spec.init.kind = InitSpec::Kind::Transfer;
                    spec.init.checkpoint = checkpoint_rel;
                    spec.init.freeze_n = freeze_n;
                    spec.init.reinit_seed = hash_combine(spec.seed, kReinitSalt);
                } else {
                    spec.init.kind = InitSpec::Kind::Fresh;
                    spec.init.init_seed = hash_combine(spec.seed, kInitSalt);
                }
                specs.push_back(std::move(spec));
            }
        }
    }
    auto results = execute_many(specs);

    SweepResult sweep;
    for (const auto& r : results) {
        SweepRow row;
        row.protocol = r.spec.protocol;
        row.param = r.spec.param;
        row.seed = r.spec.seed;
        row.stats = r.stats;
        row.status = r.status;
        row.run_dir = fs::relative(r.dir, workspace_).generic_string();
        sweep.rows.push_back(row);
    }
    fs::create_directories(runs_dir() / protocol);
    write_sweep_csv(sweep, runs_dir() / protocol / "sweep.csv");
    return sweep;
}

SweepResult TransferLab::run_ablation(AblationKind kind, int texture_patch,
                                      std::vector<double> fidelity_grid) {
    const std::string protocol = "ablate-" + to_string(kind);
    std::vector<RunSpec> specs;
    const char* arms[] = {"real", "synth"};
    auto arm_dataset = [](const std::string& arm) {
        return arm == "real" ? std::string("real") : std::string("proxy");
    };

    auto base_spec = [&](const std::string& param, uint64_t seed) {
        RunSpec spec;
        spec.protocol = protocol;
        spec.param = param;
        spec.seed = seed;
        spec.arch = arch_;
        spec.train_cfg = base_cfg_;
        spec.train_cfg.seed = hash_combine(seed, kTrainSalt);
        spec.init.kind = InitSpec::Kind::Fresh;
        spec.init.init_seed = hash_combine(seed, kInitSalt);
        return spec;
    };

    switch (kind) {
        case AblationKind::Normalization:
            // the three Table-2-style rows: baseline, exact input
            // normalization, batch norm kept in train mode during eval
            for (const std::string arm : arms) {
                struct Cell {
                    const char* name;
                    NormalizationMode norm;
                    bool bn_eval;
                };
                const Cell cells[] = {{"baseline", NormalizationMode::Default, false},
                                      {"exact_norm", NormalizationMode::Exact, false},
                                      {"bn_train_mode", NormalizationMode::Default, true}};
                for (const auto& cell : cells) {
                    const std::string param = arm + "_" + cell.name;
                    RunSpec spec = base_spec(param, point_seed(protocol, param));
                    spec.train_data.dataset_id = arm_dataset(arm);
                    spec.train_cfg.normalization = cell.norm;
                    spec.train_cfg.bn_eval_update = cell.bn_eval;
                    specs.push_back(std::move(spec));
                }
            }
            break;
        case AblationKind::Augmentation:
            for (const std::string arm : arms) {
                const AugmentationPipeline pipes[] = {AugmentationPipeline::None,
                                                      AugmentationPipeline::Basic,
                                                      AugmentationPipeline::MultiCrop};
                for (auto pipe : pipes) {
                    const std::string param = arm + "_aug_" + to_string(pipe);
                    RunSpec spec = base_spec(param, point_seed(protocol, param));
                    spec.train_data.dataset_id = arm_dataset(arm);
                    spec.train_cfg.augmentation = pipe;
                    specs.push_back(std::move(spec));
                }
            }
            break;
        case AblationKind::Texture:
            if (texture_patch < 1 || real_spec_.image_size % texture_patch != 0)
                throw ValidationError("texture ablation: patch size must divide the image size");
            for (const std::string arm : arms) {
                // paired cells share one seed so scrambling is the only delta
                const uint64_t seed = point_seed(protocol, arm);
                for (int scrambled = 0; scrambled < 2; ++scrambled) {
                    const std::string param =
                        arm + (scrambled ? "_scrambled" : "_plain");
                    RunSpec spec = base_spec(param, seed);
                    spec.train_data.dataset_id = arm_dataset(arm);
                    if (scrambled) {
                        spec.train_data.scramble_patch = texture_patch;
                        spec.train_data.scramble_seed = hash_combine(seed, kScrambleSalt);
                    }
                    specs.push_back(std::move(spec));
                }
            }
            break;
        case AblationKind::Fidelity:
            for (double phi : fidelity_grid) {
                if (!(phi >= 0.0 && phi <= 1.0))
                    throw ValidationError("fidelity ablation: phi must be in [0,1]");
                const std::string param = "phi" + format_double(phi);
                RunSpec spec = base_spec(param, point_seed(protocol, param));
                spec.train_data.dataset_id = "proxy_f" + format_double(phi);
                specs.push_back(std::move(spec));
            }
            break;
    }

    auto results = execute_many(specs);
    SweepResult sweep;
    for (const auto& r : results) {
        SweepRow row;
        row.protocol = r.spec.protocol;
        row.param = r.spec.param;
        row.seed = r.spec.seed;
        row.stats = r.stats;
        row.status = r.status;
        row.run_dir = fs::relative(r.dir, workspace_).generic_string();
        sweep.rows.push_back(row);
    }
    fs::create_directories(runs_dir() / protocol);
    write_sweep_csv(sweep, runs_dir() / protocol / "sweep.csv");
    return sweep;
}

}  // namespace synthgap
