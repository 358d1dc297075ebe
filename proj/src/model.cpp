#include "synthgap/model.hpp"

#include <cstring>

#include <json.hpp>

#include "synthgap/rng.hpp"

namespace synthgap {

using json = nlohmann::json;

namespace {
constexpr uint64_t kUnitSalt = 0x756e6974ULL;
constexpr int kCheckpointFormat = 1;
}  // namespace

void validate(const ArchitectureConfig& cfg) {
    if (cfg.stage_widths.empty())
        throw ValidationError("ArchitectureConfig: stage_widths must be non-empty");
    int prev = 0;
    for (int w : cfg.stage_widths) {
        if (w <= 0) throw ValidationError("ArchitectureConfig: widths must be positive");
        if (w < prev) throw ValidationError("ArchitectureConfig: widths must be non-decreasing");
        prev = w;
    }
    if (cfg.blocks_per_stage < 1)
        throw ValidationError("ArchitectureConfig: blocks_per_stage must be >= 1");
    if (cfg.num_categories < 2)
        throw ValidationError("ArchitectureConfig: num_categories must be >= 2");
    if (!(cfg.head_temperature > 0))
        throw ValidationError("ArchitectureConfig: head_temperature must be > 0");
}

bool operator==(const ArchitectureConfig& a, const ArchitectureConfig& b) {
    return a.stage_widths == b.stage_widths && a.blocks_per_stage == b.blocks_per_stage &&
           a.num_categories == b.num_categories && a.head_temperature == b.head_temperature;
}

namespace {

template <typename S>
void wire_net(NetT<S>& net) {
    const auto& cfg = net.cfg;
    const int stages = static_cast<int>(cfg.stage_widths.size());

    auto make_conv = [](int in_c, int out_c, int k, int stride, int pad) {
        Conv<S> c;
        c.in_c = in_c;
        c.out_c = out_c;
        c.ksize = k;
        c.stride = stride;
        c.pad = pad;
        c.weight.resize(out_c, static_cast<Eigen::Index>(k) * k * in_c);
        c.grad = MatX<S>::Zero(c.weight.rows(), c.weight.cols());
        return c;
    };
    auto make_bn = [](int channels) {
        BatchNorm<S> b;
        b.gamma.resize(channels);
        b.beta.resize(channels);
        b.running_mean.resize(channels);
        b.running_var.resize(channels);
        b.grad_gamma = VecX<S>::Zero(channels);
        b.grad_beta = VecX<S>::Zero(channels);
        return b;
    };

    net.stem = make_conv(3, cfg.stage_widths[0], 3, 1, 1);
    net.stem_bn = make_bn(cfg.stage_widths[0]);
    net.blocks.clear();
    int in_c = cfg.stage_widths[0];
    for (int s = 0; s < stages; ++s) {
        const int out_c = cfg.stage_widths[s];
        for (int b = 0; b < cfg.blocks_per_stage; ++b) {
            BlockT<S> blk;
            blk.stride = (b == 0 && s > 0) ? 2 : 1;
            blk.conv1 = make_conv(in_c, out_c, 3, blk.stride, 1);
            blk.bn1 = make_bn(out_c);
            blk.conv2 = make_conv(out_c, out_c, 3, 1, 1);
            blk.bn2 = make_bn(out_c);
            blk.has_projection = (in_c != out_c || blk.stride != 1);
            if (blk.has_projection) {
                blk.proj = make_conv(in_c, out_c, 1, blk.stride, 0);
                blk.proj_bn = make_bn(out_c);
            }
            net.blocks.push_back(std::move(blk));
            in_c = out_c;
        }
    }
    net.head.weight.resize(cfg.num_categories, cfg.stage_widths.back());
    net.head.grad = MatX<S>::Zero(cfg.num_categories, cfg.stage_widths.back());
    net.head.temperature = static_cast<S>(cfg.head_temperature);
    net.frozen.assign(static_cast<size_t>(net.units()), 0);
}

template <typename S>
void draw_conv(Conv<S>& conv, Rng& rng) {
    const double std = std::sqrt(2.0 / conv.fan_in());
    S* p = conv.weight.data();
    for (Eigen::Index i = 0; i < conv.weight.size(); ++i)
        p[i] = static_cast<S>(rng.normal() * std);
}

template <typename S>
void reset_bn(BatchNorm<S>& bn) {
    bn.gamma.setOnes();
    bn.beta.setZero();
    bn.running_mean.setZero();
    bn.running_var.setOnes();
}

// One unit's parameter draw, shared by build and reinit so that
// reinit_suffix(0, seed) reproduces build_model(cfg, seed) exactly.
template <typename S>
void init_unit(NetT<S>& net, int unit, uint64_t seed) {
    Rng rng(hash_combine(seed, kUnitSalt, static_cast<uint64_t>(unit)));
    const int num_units = net.units();
    if (unit == 0) {
        draw_conv(net.stem, rng);
        reset_bn(net.stem_bn);
    } else if (unit == num_units - 1) {
        const double std = std::sqrt(1.0 / net.head.weight.cols());
        S* p = net.head.weight.data();
        for (Eigen::Index i = 0; i < net.head.weight.size(); ++i)
            p[i] = static_cast<S>(rng.normal() * std);
    } else {
        BlockT<S>& blk = net.blocks[unit - 1];
        draw_conv(blk.conv1, rng);
        reset_bn(blk.bn1);
        draw_conv(blk.conv2, rng);
        reset_bn(blk.bn2);
        if (blk.has_projection) {
            draw_conv(blk.proj, rng);
            reset_bn(blk.proj_bn);
        }
    }
}

}  // namespace

template <typename S>
NetT<S> build_net(const ArchitectureConfig& cfg, uint64_t seed) {
    validate(cfg);
    NetT<S> net;
    net.cfg = cfg;
    wire_net(net);
    for (int u = 0; u < net.units(); ++u) init_unit(net, u, seed);
    net.seed_log = {seed};
    return net;
}

template NetT<float> build_net<float>(const ArchitectureConfig&, uint64_t);
template NetT<double> build_net<double>(const ArchitectureConfig&, uint64_t);

Model build_model(const ArchitectureConfig& cfg, uint64_t seed) {
    return build_net<float>(cfg, seed);
}

template <typename S>
std::vector<TensorRef<S>> tensor_table(NetT<S>& net) {
    std::vector<TensorRef<S>> table;
    auto add = [&](int unit, std::string name, MatX<S>& m, MatX<S>& g, bool decay) {
        table.push_back({unit, std::move(name), m.data(), g.data(), m.rows(), m.cols(), false, decay});
    };
    auto add_vec = [&](int unit, std::string name, VecX<S>& v, VecX<S>* g, bool rs) {
        table.push_back({unit, std::move(name), v.data(), g ? g->data() : nullptr, v.size(), 1,
                         rs, false});
    };
    auto add_bn = [&](int unit, const std::string& prefix, BatchNorm<S>& bn) {
        add_vec(unit, prefix + ".gamma", bn.gamma, &bn.grad_gamma, false);
        add_vec(unit, prefix + ".beta", bn.beta, &bn.grad_beta, false);
        add_vec(unit, prefix + ".running_mean", bn.running_mean, nullptr, true);
        add_vec(unit, prefix + ".running_var", bn.running_var, nullptr, true);
    };
    add(0, "stem.conv.weight", net.stem.weight, net.stem.grad, true);
    add_bn(0, "stem.bn", net.stem_bn);
    for (size_t i = 0; i < net.blocks.size(); ++i) {
        const int unit = 1 + static_cast<int>(i);
        const std::string p = "block" + std::to_string(i);
        BlockT<S>& blk = net.blocks[i];
        add(unit, p + ".conv1.weight", blk.conv1.weight, blk.conv1.grad, true);
        add_bn(unit, p + ".bn1", blk.bn1);
        add(unit, p + ".conv2.weight", blk.conv2.weight, blk.conv2.grad, true);
        add_bn(unit, p + ".bn2", blk.bn2);
        if (blk.has_projection) {
            add(unit, p + ".proj.weight", blk.proj.weight, blk.proj.grad, true);
            add_bn(unit, p + ".proj_bn", blk.proj_bn);
        }
    }
    add(net.units() - 1, "head.weight", net.head.weight, net.head.grad, true);
    return table;
}

template std::vector<TensorRef<float>> tensor_table<float>(NetT<float>&);
template std::vector<TensorRef<double>> tensor_table<double>(NetT<double>&);

void freeze_prefix(Model& model, int n) {
    if (n < 0 || n > model.units())
        throw ValidationError("freeze_prefix: N " + std::to_string(n) + " out of range [0, " +
                              std::to_string(model.units()) + "]");
    for (int u = 0; u < model.units(); ++u) model.frozen[u] = u < n ? 1 : 0;
}

void reinit_suffix(Model& model, int n, uint64_t seed) {
    if (n < 0 || n > model.units())
        throw ValidationError("reinit_suffix: N " + std::to_string(n) + " out of range [0, " +
                              std::to_string(model.units()) + "]");
    for (int u = n; u < model.units(); ++u) init_unit(model, u, seed);
    if (n < model.units()) model.seed_log.push_back(seed);
}

void set_bn_eval_update(Model& model, bool enabled) { model.bn_eval_update = enabled; }

ParamSnapshot snapshot(const Model& model) {
    auto& m = const_cast<Model&>(model);  // read-only traversal
    auto table = tensor_table(m);
    ParamSnapshot snap;
    snap.unit_offsets.assign(static_cast<size_t>(model.units()) + 1, 0);
    size_t total = 0;
    for (const auto& t : table) total += static_cast<size_t>(t.size());
    snap.data.reserve(total);
    int cur_unit = 0;
    for (const auto& t : table) {
        while (cur_unit < t.unit) snap.unit_offsets[++cur_unit] = snap.data.size();
        snap.data.insert(snap.data.end(), t.data, t.data + t.size());
    }
    while (cur_unit < model.units()) snap.unit_offsets[++cur_unit] = snap.data.size();
    return snap;
}

bool ParamSnapshot::unit_equal(const ParamSnapshot& other, int u) const {
    if (unit_offsets != other.unit_offsets) return false;
    const size_t lo = unit_offsets[u], hi = unit_offsets[u + 1];
    return std::memcmp(data.data() + lo, other.data.data() + lo, (hi - lo) * sizeof(float)) == 0;
}

bool operator==(const ParamSnapshot& a, const ParamSnapshot& b) {
    return a.unit_offsets == b.unit_offsets && a.data.size() == b.data.size() &&
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

void save_checkpoint(const Model& model, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    auto& m = const_cast<Model&>(model);
    auto table = tensor_table(m);
    json units = json::array();
    std::vector<float> params;
    size_t offset = 0;
    int cur_unit = -1;
    json* unit_entry = nullptr;
    for (const auto& t : table) {
        if (t.unit != cur_unit) {
            units.push_back(json{{"unit", t.unit}, {"tensors", json::array()}});
            unit_entry = &units.back();
            cur_unit = t.unit;
        }
        (*unit_entry)["tensors"].push_back(json{{"name", t.name},
                                                {"rows", t.rows},
                                                {"cols", t.cols},
                                                {"byte_offset", offset * sizeof(float)}});
        params.insert(params.end(), t.data, t.data + t.size());
        offset += static_cast<size_t>(t.size());
    }
    json manifest{
        {"format_version", kCheckpointFormat},
        {"arch",
         {{"stage_widths", model.cfg.stage_widths},
          {"blocks_per_stage", model.cfg.blocks_per_stage},
          {"num_categories", model.cfg.num_categories},
          {"head_temperature", model.cfg.head_temperature}}},
        {"frozen", model.frozen},
        {"seed_log", model.seed_log},
        {"units", units},
        {"param_bytes", params.size() * sizeof(float)},
    };
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
    write_file_bytes(dir / "params.bin", params.data(), params.size() * sizeof(float));
}

Model load_checkpoint(const fs::path& dir) {
    if (!fs::exists(dir / "manifest.json"))
        throw NotFoundError("no checkpoint manifest at " + (dir / "manifest.json").string());
    json manifest;
    ArchitectureConfig cfg;
    try {
        manifest = json::parse(read_text_file(dir / "manifest.json"));
        if (manifest.at("format_version").get<int>() != kCheckpointFormat)
            throw FormatError("unsupported checkpoint format_version");
        const json& arch = manifest.at("arch");
        cfg.stage_widths = arch.at("stage_widths").get<std::vector<int>>();
        cfg.blocks_per_stage = arch.at("blocks_per_stage").get<int>();
        cfg.num_categories = arch.at("num_categories").get<int>();
        cfg.head_temperature = arch.at("head_temperature").get<double>();
    } catch (const json::exception& e) {
        throw FormatError("bad checkpoint manifest: " + std::string(e.what()));
    }
    validate(cfg);

    Model model;
    model.cfg = cfg;
    wire_net(model);
    auto table = tensor_table(model);

    size_t expected_floats = 0;
    for (const auto& t : table) expected_floats += static_cast<size_t>(t.size());
    auto bytes = read_file_bytes(dir / "params.bin");
    if (bytes.size() != expected_floats * sizeof(float)) {
        throw FormatError((dir / "params.bin").string() + ": expected " +
                          std::to_string(expected_floats * sizeof(float)) + " bytes, found " +
                          std::to_string(bytes.size()));
    }
    try {
        // cross-check the stored tensor table against the derived one
        size_t ti = 0, offset = 0;
        for (const auto& unit : manifest.at("units")) {
            for (const auto& tj : unit.at("tensors")) {
                if (ti >= table.size()) throw FormatError("checkpoint lists extra tensors");
                const auto& t = table[ti];
                if (tj.at("name").get<std::string>() != t.name ||
                    tj.at("rows").get<Eigen::Index>() != t.rows ||
                    tj.at("cols").get<Eigen::Index>() != t.cols ||
                    tj.at("byte_offset").get<size_t>() != offset * sizeof(float))
                    throw FormatError("checkpoint tensor table mismatch at '" + t.name + "'");
                offset += static_cast<size_t>(t.size());
                ++ti;
            }
        }
        if (ti != table.size()) throw FormatError("checkpoint tensor table incomplete");
        auto frozen = manifest.at("frozen").get<std::vector<uint8_t>>();
        if (frozen.size() != static_cast<size_t>(model.units()))
            throw FormatError("checkpoint frozen-flag count mismatch");
        model.frozen = frozen;
        model.seed_log = manifest.at("seed_log").get<std::vector<uint64_t>>();
    } catch (const json::exception& e) {
        throw FormatError("bad checkpoint manifest: " + std::string(e.what()));
    }
    const float* src = reinterpret_cast<const float*>(bytes.data());
    for (const auto& t : table) {
        std::memcpy(t.data, src, static_cast<size_t>(t.size()) * sizeof(float));
        src += t.size();
    }
    return model;
}

Model load_checkpoint(const fs::path& dir, const ArchitectureConfig& expected) {
    Model model = load_checkpoint(dir);
    if (!(model.cfg == expected))
        throw ValidationError("checkpoint architecture does not match the expected config");
    return model;
}

NetT<double> to_double(const Model& model) {
    NetT<double> net;
    net.cfg = model.cfg;
    wire_net(net);
    net.frozen = model.frozen;
    net.bn_eval_update = model.bn_eval_update;
    net.seed_log = model.seed_log;
    auto& m = const_cast<Model&>(model);
    auto src = tensor_table(m);
    auto dst = tensor_table(net);
    for (size_t i = 0; i < src.size(); ++i) {
        for (Eigen::Index j = 0; j < src[i].size(); ++j)
            dst[i].data[j] = static_cast<double>(src[i].data[j]);
    }
    return net;
}

}  // namespace synthgap
