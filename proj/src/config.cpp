#include "synthgap/config.hpp"

#include <cstdlib>
#include <sstream>

#include "synthgap/rng.hpp"

namespace synthgap {

namespace {

// Minimal TOML subset: [section] headers, key = value, # comments, values of
// type string / integer / float / boolean / homogeneous numeric array.
struct TomlValue {
    enum class Kind { String, Number, Boolean, Array } kind;
    std::string str;
    double num = 0;
    bool boolean = false;
    std::vector<double> array;
    bool number_is_int = false;
};

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

TomlValue parse_value(const std::string& raw, int line_no) {
    const std::string v = trim(raw);
    if (v.empty()) throw ValidationError("config line " + std::to_string(line_no) + ": empty value");
    TomlValue out{};
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"')
            throw ValidationError("config line " + std::to_string(line_no) + ": unterminated string");
        out.kind = TomlValue::Kind::String;
        std::string s;
        for (size_t i = 1; i + 1 < v.size(); ++i) {
            if (v[i] == '\\' && i + 2 < v.size()) {
                ++i;
                s += v[i];
            } else {
                s += v[i];
            }
        }
        out.str = s;
        return out;
    }
    if (v == "true" || v == "false") {
        out.kind = TomlValue::Kind::Boolean;
        out.boolean = v == "true";
        return out;
    }
    if (v.front() == '[') {
        if (v.back() != ']')
            throw ValidationError("config line " + std::to_string(line_no) + ": unterminated array");
        out.kind = TomlValue::Kind::Array;
        const std::string body = trim(v.substr(1, v.size() - 2));
        if (body.empty()) return out;
        std::stringstream ss(body);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty())
                throw ValidationError("config line " + std::to_string(line_no) + ": empty array item");
            out.array.push_back(parse_double(item));
        }
        return out;
    }
    out.kind = TomlValue::Kind::Number;
    out.num = parse_double(v);
    out.number_is_int = v.find_first_of(".eE") == std::string::npos;
    return out;
}

int to_int(const TomlValue& v, const std::string& key) {
    if (v.kind != TomlValue::Kind::Number || !v.number_is_int)
        throw ValidationError("config key '" + key + "' expects an integer");
    return static_cast<int>(v.num);
}

uint64_t to_u64(const TomlValue& v, const std::string& key) {
    if (v.kind != TomlValue::Kind::Number || !v.number_is_int || v.num < 0)
        throw ValidationError("config key '" + key + "' expects a non-negative integer");
    return static_cast<uint64_t>(v.num);
}

double to_float(const TomlValue& v, const std::string& key) {
    if (v.kind != TomlValue::Kind::Number)
        throw ValidationError("config key '" + key + "' expects a number");
    return v.num;
}

std::string to_str(const TomlValue& v, const std::string& key) {
    if (v.kind != TomlValue::Kind::String)
        throw ValidationError("config key '" + key + "' expects a string");
    return v.str;
}

bool to_bool(const TomlValue& v, const std::string& key) {
    if (v.kind != TomlValue::Kind::Boolean)
        throw ValidationError("config key '" + key + "' expects true/false");
    return v.boolean;
}

std::vector<int> to_int_array(const TomlValue& v, const std::string& key) {
    if (v.kind != TomlValue::Kind::Array)
        throw ValidationError("config key '" + key + "' expects an array");
    std::vector<int> out;
    for (double d : v.array) out.push_back(static_cast<int>(d));
    return out;
}

std::vector<double> to_float_array(const TomlValue& v, const std::string& key) {
    if (v.kind != TomlValue::Kind::Array)
        throw ValidationError("config key '" + key + "' expects an array");
    return v.array;
}

}  // namespace

ExperimentConfig parse_config(const std::string& toml_text) {
    ExperimentConfig cfg;
    std::istringstream in(toml_text);
    std::string line, section;
    int line_no = 0;
    std::vector<std::string> seen;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(strip_comment(line));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ValidationError("config line " + std::to_string(line_no) + ": bad section");
            section = trim(line.substr(1, line.size() - 2));
            if (section != "dataset" && section != "model" && section != "train" &&
                section != "protocol" && section != "output" && section != "seeds")
                throw ValidationError("config: unknown section [" + section + "]");
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (section.empty())
            throw ValidationError("config line " + std::to_string(line_no) + ": key outside section");
        const std::string full = section + "." + key;
        if (std::find(seen.begin(), seen.end(), full) != seen.end())
            throw ValidationError("config: duplicate key '" + full + "'");
        seen.push_back(full);
        const TomlValue v = parse_value(line.substr(eq + 1), line_no);

        if (full == "dataset.num_categories") cfg.num_categories = to_int(v, full);
        else if (full == "dataset.per_category_train") cfg.per_category_train = to_int(v, full);
        else if (full == "dataset.per_category_val") cfg.per_category_val = to_int(v, full);
        else if (full == "dataset.image_size") cfg.image_size = to_int(v, full);
        else if (full == "dataset.fidelity") cfg.fidelity = to_float(v, full);
        else if (full == "dataset.seed") cfg.dataset_seed = to_u64(v, full);
        else if (full == "model.stage_widths") cfg.stage_widths = to_int_array(v, full);
        else if (full == "model.blocks_per_stage") cfg.blocks_per_stage = to_int(v, full);
        else if (full == "model.head_temperature") cfg.head_temperature = to_float(v, full);
        else if (full == "train.epochs") cfg.epochs = to_int(v, full);
        else if (full == "train.batch_size") cfg.batch_size = to_int(v, full);
        else if (full == "train.base_lr") cfg.base_lr = to_float(v, full);
        else if (full == "train.warmup_epochs") cfg.warmup_epochs = to_float(v, full);
        else if (full == "train.momentum") cfg.momentum = to_float(v, full);
        else if (full == "train.weight_decay") cfg.weight_decay = to_float(v, full);
        else if (full == "train.augmentation") cfg.augmentation = to_str(v, full);
        else if (full == "train.normalization") cfg.normalization = to_str(v, full);
        else if (full == "train.bn_eval_update") cfg.bn_eval_update = to_bool(v, full);
        else if (full == "protocol.kind") cfg.kind = to_str(v, full);
        else if (full == "protocol.direction") cfg.direction = to_str(v, full);
        else if (full == "protocol.n_list") cfg.n_list = to_int_array(v, full);
        else if (full == "protocol.fractions") cfg.fractions = to_float_array(v, full);
        else if (full == "protocol.arms") cfg.arms = to_str(v, full);
        else if (full == "protocol.ablation") cfg.ablation = to_str(v, full);
        else if (full == "protocol.patch_size") cfg.patch_size = to_int(v, full);
        else if (full == "protocol.fidelity_grid") cfg.fidelity_grid = to_float_array(v, full);
        else if (full == "protocol.repeats") cfg.repeats = to_int(v, full);
        else if (full == "protocol.retrain_epochs") cfg.retrain_epochs = to_int(v, full);
        else if (full == "output.workspace") cfg.workspace = to_str(v, full);
        else if (full == "seeds.master") cfg.master_seed = to_u64(v, full);
        else throw ValidationError("config: unknown key '" + full + "'");
    }
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    return parse_config(read_text_file(path));
}

namespace {

std::string emit_int_array(const std::vector<int>& v) {
    std::string s = "[";
    for (size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
    return s + "]";
}

std::string emit_float_array(const std::vector<double>& v) {
    std::string s = "[";
    for (size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
    return s + "]";
}

}  // namespace

std::string materialize_config(const ExperimentConfig& c) {
    std::string s;
    s += "[dataset]\n";
    s += "num_categories = " + std::to_string(c.num_categories) + "\n";
    s += "per_category_train = " + std::to_string(c.per_category_train) + "\n";
    s += "per_category_val = " + std::to_string(c.per_category_val) + "\n";
    s += "image_size = " + std::to_string(c.image_size) + "\n";
    s += "fidelity = " + format_double(c.fidelity) + "\n";
    s += "seed = " + std::to_string(c.dataset_seed) + "\n";
    s += "\n[model]\n";
    s += "stage_widths = " + emit_int_array(c.stage_widths) + "\n";
    s += "blocks_per_stage = " + std::to_string(c.blocks_per_stage) + "\n";
    s += "head_temperature = " + format_double(c.head_temperature) + "\n";
    s += "\n[train]\n";
    s += "epochs = " + std::to_string(c.epochs) + "\n";
    s += "batch_size = " + std::to_string(c.batch_size) + "\n";
    s += "base_lr = " + format_double(c.base_lr) + "\n";
    s += "warmup_epochs = " + format_double(c.warmup_epochs) + "\n";
    s += "momentum = " + format_double(c.momentum) + "\n";
    s += "weight_decay = " + format_double(c.weight_decay) + "\n";
    s += "augmentation = \"" + c.augmentation + "\"\n";
    s += "normalization = \"" + c.normalization + "\"\n";
    s += std::string("bn_eval_update = ") + (c.bn_eval_update ? "true" : "false") + "\n";
    s += "\n[protocol]\n";
    s += "kind = \"" + c.kind + "\"\n";
    s += "direction = \"" + c.direction + "\"\n";
    s += "n_list = " + emit_int_array(c.n_list) + "\n";
    s += "fractions = " + emit_float_array(c.fractions) + "\n";
    s += "arms = \"" + c.arms + "\"\n";
    s += "ablation = \"" + c.ablation + "\"\n";
    s += "patch_size = " + std::to_string(c.patch_size) + "\n";
    s += "fidelity_grid = " + emit_float_array(c.fidelity_grid) + "\n";
    s += "repeats = " + std::to_string(c.repeats) + "\n";
    s += "retrain_epochs = " + std::to_string(c.retrain_epochs) + "\n";
    s += "\n[output]\n";
    s += "workspace = \"" + c.workspace + "\"\n";
    s += "\n[seeds]\n";
    s += "master = " + std::to_string(c.master_seed) + "\n";
    return s;
}

DatasetSpec real_dataset_spec(const ExperimentConfig& cfg) {
    DatasetSpec spec;
    spec.num_categories = cfg.num_categories;
    spec.per_category_train = cfg.per_category_train;
    spec.per_category_val = cfg.per_category_val;
    spec.image_size = cfg.image_size;
    spec.distribution = Distribution::Real;
    spec.fidelity = 1.0;
    spec.seed = cfg.dataset_seed != 0 ? cfg.dataset_seed
                                      : hash_combine(cfg.master_seed, fnv1a("dataset"));
    validate(spec);
    return spec;
}

ArchitectureConfig architecture(const ExperimentConfig& cfg) {
    ArchitectureConfig arch;
    arch.stage_widths = cfg.stage_widths;
    arch.blocks_per_stage = cfg.blocks_per_stage;
    arch.num_categories = cfg.num_categories;
    arch.head_temperature = cfg.head_temperature;
    validate(arch);
    return arch;
}

TrainConfig train_config(const ExperimentConfig& cfg) {
    TrainConfig t;
    t.epochs = cfg.epochs;
    t.batch_size = cfg.batch_size;
    t.base_lr = cfg.base_lr;
    t.warmup_epochs = cfg.warmup_epochs;
    t.momentum = cfg.momentum;
    t.weight_decay = cfg.weight_decay;
    t.augmentation = augmentation_from_string(cfg.augmentation);
    t.normalization = normalization_from_string(cfg.normalization);
    t.bn_eval_update = cfg.bn_eval_update;
    t.seed = 0;  // per-run seeds are derived by the lab
    validate(t);
    return t;
}

fs::path resolve_workspace(const ExperimentConfig& cfg) {
    if (!cfg.workspace.empty()) return cfg.workspace;
    if (const char* env = std::getenv("SYNTHGAP_WORKSPACE"); env && *env) return env;
    return "workspace";
}

}  // namespace synthgap
