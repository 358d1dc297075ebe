#include "synthgap/dataset.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

#include <json.hpp>

#include "synthgap/errors.hpp"
#include "synthgap/rng.hpp"

namespace synthgap {

using json = nlohmann::json;

std::string to_string(Distribution d) {
    return d == Distribution::Real ? "real" : "proxy";
}

Distribution distribution_from_string(const std::string& s) {
    if (s == "real") return Distribution::Real;
    if (s == "proxy") return Distribution::Proxy;
    throw ValidationError("unknown distribution: '" + s + "'");
}

void validate(const DatasetSpec& spec) {
    if (spec.num_categories < 2)
        throw ValidationError("DatasetSpec: num_categories must be >= 2");
    if (spec.per_category_train < 1 || spec.per_category_val < 1)
        throw ValidationError("DatasetSpec: per-category counts must be >= 1");
    if (spec.image_size < 4)
        throw ValidationError("DatasetSpec: image_size must be >= 4");
    if (!(spec.fidelity >= 0.0 && spec.fidelity <= 1.0))
        throw ValidationError("DatasetSpec: fidelity must be in [0,1]");
}

ChannelStats default_channel_stats() {
    ChannelStats s;
    s.mean = {0.485, 0.456, 0.406};
    s.std = {0.229, 0.224, 0.225};
    return s;
}

namespace {

json stats_to_json(const ChannelStats& s) {
    return json{{"mean", s.mean}, {"std", s.std}};
}

ChannelStats stats_from_json(const json& j) {
    ChannelStats s;
    for (int c = 0; c < 3; ++c) {
        s.mean[c] = j.at("mean").at(c).get<double>();
        s.std[c] = j.at("std").at(c).get<double>();
    }
    return s;
}

json manifest_to_json(const DatasetManifest& m) {
    return json{
        {"generator_version", m.generator_version},
        {"spec",
         {{"num_categories", m.spec.num_categories},
          {"per_category_train", m.spec.per_category_train},
          {"per_category_val", m.spec.per_category_val},
          {"image_size", m.spec.image_size},
          {"distribution", to_string(m.spec.distribution)},
          {"fidelity", m.spec.fidelity},
          {"seed", m.spec.seed}}},
        {"train_count", m.train_count},
        {"val_count", m.val_count},
        {"image_shape", {3, m.spec.image_size, m.spec.image_size}},
        {"train_stats", stats_to_json(m.train_stats)},
    };
}

DatasetManifest manifest_from_json(const json& j) {
    DatasetManifest m;
    m.generator_version = j.at("generator_version").get<std::string>();
    const json& s = j.at("spec");
    m.spec.num_categories = s.at("num_categories").get<int>();
    m.spec.per_category_train = s.at("per_category_train").get<int>();
    m.spec.per_category_val = s.at("per_category_val").get<int>();
    m.spec.image_size = s.at("image_size").get<int>();
    m.spec.distribution = distribution_from_string(s.at("distribution").get<std::string>());
    m.spec.fidelity = s.at("fidelity").get<double>();
    m.spec.seed = s.at("seed").get<uint64_t>();
    m.train_count = j.at("train_count").get<int>();
    m.val_count = j.at("val_count").get<int>();
    m.train_stats = stats_from_json(j.at("train_stats"));
    return m;
}

struct SplitFiles {
    const char* images;
    const char* labels;
};

SplitFiles split_files(Split s) {
    return s == Split::Train ? SplitFiles{"train_images.bin", "train_labels.bin"}
                             : SplitFiles{"val_images.bin", "val_labels.bin"};
}

std::vector<uint16_t> read_labels(const fs::path& path, int expected) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() != static_cast<size_t>(expected) * 2) {
        throw FormatError(path.string() + ": expected " + std::to_string(expected * 2) +
                          " bytes, found " + std::to_string(bytes.size()));
    }
    std::vector<uint16_t> labels(expected);
    for (int i = 0; i < expected; ++i) {
        labels[i] = static_cast<uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
    }
    return labels;
}

}  // namespace

Dataset generate_dataset(const DatasetSpec& spec, const fs::path& out_dir) {
    validate(spec);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    const size_t record_bytes = static_cast<size_t>(3) * spec.image_size * spec.image_size;
    const size_t per_channel = static_cast<size_t>(spec.image_size) * spec.image_size;
    std::array<double, 3> sum{0, 0, 0}, sum_sq{0, 0, 0};

    auto write_split = [&](Split split, int per_category) {
        const int total = per_category * spec.num_categories;
        std::vector<uint8_t> images(record_bytes * total);
        std::vector<uint8_t> labels(static_cast<size_t>(total) * 2);
        // records grouped by category; index within the split drives the rng
        for (int i = 0; i < total; ++i) {
            int category = i / per_category;
            Image img = render_sample(spec, category, sample_rng_state(spec, split, i));
            std::memcpy(images.data() + record_bytes * i, img.chw.data(), record_bytes);
            labels[2 * i] = static_cast<uint8_t>(category & 0xff);
            labels[2 * i + 1] = static_cast<uint8_t>((category >> 8) & 0xff);
            if (split == Split::Train) {
                for (int c = 0; c < 3; ++c) {
                    for (size_t p = 0; p < per_channel; ++p) {
                        double v = img.chw[c * per_channel + p] / 255.0;
                        sum[c] += v;
                        sum_sq[c] += v * v;
                    }
                }
            }
        }
        auto files = split_files(split);
        write_file_bytes(out_dir / files.images, images.data(), images.size());
        write_file_bytes(out_dir / files.labels, labels.data(), labels.size());
    };
    write_split(Split::Train, spec.per_category_train);
    write_split(Split::Val, spec.per_category_val);

    DatasetManifest manifest;
    manifest.spec = spec;
    manifest.train_count = spec.per_category_train * spec.num_categories;
    manifest.val_count = spec.per_category_val * spec.num_categories;
    manifest.generator_version = kGeneratorVersion;
    const double n = static_cast<double>(manifest.train_count) * per_channel;
    for (int c = 0; c < 3; ++c) {
        manifest.train_stats.mean[c] = sum[c] / n;
        double var = sum_sq[c] / n - manifest.train_stats.mean[c] * manifest.train_stats.mean[c];
        manifest.train_stats.std[c] = std::max(std::sqrt(std::max(var, 0.0)), kStdClampEps);
    }
    write_text_file(out_dir / "manifest.json", manifest_to_json(manifest).dump(2) + "\n");
    return Dataset::open(out_dir);
}

Dataset Dataset::open(const fs::path& root) {
    if (!fs::exists(root / "manifest.json"))
        throw NotFoundError("no dataset manifest at " + (root / "manifest.json").string());
    Dataset ds;
    ds.root_ = root;
    json j;
    try {
        j = json::parse(read_text_file(root / "manifest.json"));
        ds.manifest_ = manifest_from_json(j);
    } catch (const json::exception& e) {
        throw FormatError("bad manifest " + (root / "manifest.json").string() + ": " + e.what());
    }
    const auto& m = ds.manifest_;
    const size_t record_bytes = static_cast<size_t>(3) * m.spec.image_size * m.spec.image_size;

    auto load_images = [&](Split s, int count) {
        auto files = split_files(s);
        auto bytes = read_file_bytes(root / files.images);
        if (bytes.size() != record_bytes * count) {
            throw FormatError((root / files.images).string() + ": expected " +
                              std::to_string(record_bytes * count) + " bytes, found " +
                              std::to_string(bytes.size()));
        }
        return std::make_shared<std::vector<uint8_t>>(std::move(bytes));
    };
    ds.train_images_ = load_images(Split::Train, m.train_count);
    ds.val_images_ = load_images(Split::Val, m.val_count);
    auto files_t = split_files(Split::Train), files_v = split_files(Split::Val);
    ds.train_labels_ = std::make_shared<std::vector<uint16_t>>(
        read_labels(root / files_t.labels, m.train_count));
    ds.val_labels_ = std::make_shared<std::vector<uint16_t>>(
        read_labels(root / files_v.labels, m.val_count));
    for (auto lbl : *ds.train_labels_)
        if (lbl >= m.spec.num_categories)
            throw FormatError("train label " + std::to_string(lbl) + " out of range");
    for (auto lbl : *ds.val_labels_)
        if (lbl >= m.spec.num_categories)
            throw FormatError("val label " + std::to_string(lbl) + " out of range");
    return ds;
}

int Dataset::count(Split s) const {
    return s == Split::Train ? manifest_.train_count : manifest_.val_count;
}

const uint8_t* Dataset::image_data(Split s, int index) const {
    const auto& buf = s == Split::Train ? *train_images_ : *val_images_;
    const size_t record_bytes = static_cast<size_t>(3) * image_size() * image_size();
    return buf.data() + record_bytes * index;
}

uint16_t Dataset::label(Split s, int index) const {
    return s == Split::Train ? (*train_labels_)[index] : (*val_labels_)[index];
}

DatasetView stratified_reduce(const Dataset& data, double fraction, uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw ValidationError("stratified_reduce: fraction must be in (0,1]");
    const auto& m = data.manifest();
    const int per_cat = m.spec.per_category_train;
    const int keep = static_cast<int>(std::floor(fraction * per_cat));
    if (keep < 1)
        throw ValidationError("stratified_reduce: fraction " + format_double(fraction) +
                              " leaves zero samples per category");
    DatasetView view;
    view.base = &data;
    view.fraction = fraction;
    view.seed = seed;
    view.indices.reserve(static_cast<size_t>(keep) * m.spec.num_categories);
    std::vector<uint32_t> cat_indices(per_cat);
    for (int c = 0; c < m.spec.num_categories; ++c) {
        std::iota(cat_indices.begin(), cat_indices.end(), static_cast<uint32_t>(c * per_cat));
        Rng rng(hash_combine(seed, static_cast<uint64_t>(c)));
        rng.shuffle(cat_indices.begin(), cat_indices.end());
        std::vector<uint32_t> kept(cat_indices.begin(), cat_indices.begin() + keep);
        std::sort(kept.begin(), kept.end());
        view.indices.insert(view.indices.end(), kept.begin(), kept.end());
    }
    return view;
}

SampleSet SampleSet::train_of(const Dataset& ds) {
    SampleSet s;
    s.ds_ = &ds;
    s.split_ = Split::Train;
    s.count_ = ds.count(Split::Train);
    return s;
}

SampleSet SampleSet::val_of(const Dataset& ds) {
    SampleSet s;
    s.ds_ = &ds;
    s.split_ = Split::Val;
    s.count_ = ds.count(Split::Val);
    return s;
}

SampleSet SampleSet::of_view(const DatasetView& view) {
    SampleSet s;
    s.ds_ = view.base;
    s.split_ = Split::Train;
    s.count_ = view.base->count(Split::Train);
    s.indices_ = std::make_shared<const std::vector<uint32_t>>(view.indices);
    return s;
}

SampleSet SampleSet::with_scramble(int patch_size, uint64_t seed) const {
    SampleSet s = *this;
    s.scramble_patch_ = patch_size;
    s.scramble_seed_ = seed;
    return s;
}

int SampleSet::image_size() const { return ds_->image_size(); }
int SampleSet::num_categories() const { return ds_->num_categories(); }

uint32_t SampleSet::record_index(size_t i) const {
    return indices_ ? (*indices_)[i] : static_cast<uint32_t>(i);
}

uint16_t SampleSet::label(size_t i) const {
    return ds_->label(split_, static_cast<int>(record_index(i)));
}

void SampleSet::fetch(size_t i, uint8_t* dst) const {
    const uint32_t rec = record_index(i);
    const size_t bytes = static_cast<size_t>(3) * image_size() * image_size();
    const uint8_t* src = ds_->image_data(split_, static_cast<int>(rec));
    if (!scramble_patch_) {
        std::memcpy(dst, src, bytes);
        return;
    }
    Image img(image_size(), image_size());
    std::memcpy(img.chw.data(), src, bytes);
    Image scrambled =
        texture_scramble(img, *scramble_patch_, hash_combine(scramble_seed_, rec));
    std::memcpy(dst, scrambled.chw.data(), bytes);
}

ChannelStats compute_channel_stats(const SampleSet& data) {
    if (data.size() == 0) throw ValidationError("compute_channel_stats: empty dataset");
    const int size = data.image_size();
    const size_t per_channel = static_cast<size_t>(size) * size;
    std::vector<uint8_t> buf(3 * per_channel);
    std::array<double, 3> sum{0, 0, 0}, sum_sq{0, 0, 0};
    for (size_t i = 0; i < data.size(); ++i) {
        data.fetch(i, buf.data());
        for (int c = 0; c < 3; ++c) {
            const uint8_t* plane = buf.data() + c * per_channel;
            double s = 0, s2 = 0;
            for (size_t p = 0; p < per_channel; ++p) {
                double v = plane[p] / 255.0;
                s += v;
                s2 += v * v;
            }
            sum[c] += s;
            sum_sq[c] += s2;
        }
    }
    const double n = static_cast<double>(data.size()) * per_channel;
    ChannelStats stats;
    for (int c = 0; c < 3; ++c) {
        stats.mean[c] = sum[c] / n;
        double var = sum_sq[c] / n - stats.mean[c] * stats.mean[c];
        stats.std[c] = std::max(std::sqrt(std::max(var, 0.0)), kStdClampEps);
    }
    return stats;
}

ChannelStats compute_channel_stats(const Dataset& data) {
    return compute_channel_stats(SampleSet::train_of(data));
}

ChannelStats compute_channel_stats(const DatasetView& view) {
    return compute_channel_stats(SampleSet::of_view(view));
}

}  // namespace synthgap
