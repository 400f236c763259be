#include "trojanscope/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "trojanscope/rng.hpp"
#include "trojanscope/textio.hpp"

namespace trojanscope::data {

namespace fs = std::filesystem;

// ---- synthetic shapes ------------------------------------------------------

namespace {

// Ten parametric glyph families; class k uses family k (class_count <= 10).
bool glyph_hit(int family, double dx, double dy, double r, double thick) {
    const double ax = std::abs(dx), ay = std::abs(dy);
    switch (family) {
        case 0: return dx * dx + dy * dy <= r * r;                       // filled disk
        case 1: return ax <= r && ay <= r && std::max(ax, ay) >= r - thick;  // hollow square
        case 2: return (ax <= thick || ay <= thick) && ax <= r && ay <= r;   // plus
        case 3: return std::abs(ax - ay) <= thick && ax <= r && ay <= r;     // diagonal cross
        case 4:                                                          // two horizontal bars
            return ax <= r && (std::abs(dy - r / 2) <= thick || std::abs(dy + r / 2) <= thick);
        case 5: return dy >= -r && dy <= r && ax <= (dy + r) / 2;        // filled triangle
        case 6: {                                                        // ring
            const double d2 = dx * dx + dy * dy;
            const double inner = std::max(0.0, r - thick);
            return d2 <= r * r && d2 >= inner * inner;
        }
        case 7:                                                          // two vertical bars
            return ay <= r && (std::abs(dx - r / 2) <= thick || std::abs(dx + r / 2) <= thick);
        case 8: return ax + ay <= r && ax + ay >= r - 1.8 * thick;       // diamond outline
        case 9: {                                                        // coarse checker
            if (ax > r || ay > r) return false;
            const double cell = std::max(2.0, r / 2.0);
            const int px = static_cast<int>(std::floor((dx + r) / cell));
            const int py = static_cast<int>(std::floor((dy + r) / cell));
            return (px + py) % 2 == 0;
        }
        default: return false;
    }
}

// Fixed palette for 3-channel glyphs; grayscale uses intensity only.
const float kPalette[10][3] = {
    {1.00f, 0.25f, 0.25f}, {0.25f, 1.00f, 0.25f}, {0.30f, 0.40f, 1.00f}, {1.00f, 1.00f, 0.30f},
    {1.00f, 0.35f, 1.00f}, {0.30f, 1.00f, 1.00f}, {1.00f, 0.60f, 0.20f}, {0.60f, 0.30f, 1.00f},
    {0.55f, 1.00f, 0.45f}, {0.90f, 0.90f, 0.90f}};

void render_sample(float* out, int channels, int size, int cls, Rng& rng) {
    const double jitter = size / 8.0;
    const double cx = size / 2.0 + rng.uniform(-jitter, jitter);
    const double cy = size / 2.0 + rng.uniform(-jitter, jitter);
    const double r = rng.uniform(0.20, 0.32) * size;
    const double thick = std::max(1.2, r / 4.0);
    // glyph intensity stays below 0.85, leaving the top of the range for
    // out-of-distribution content (a trigger should rarely occur naturally)
    const double intensity = rng.uniform(0.55, 0.85);
    const size_t plane = static_cast<size_t>(size) * size;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const bool hit = glyph_hit(cls % 10, x - cx, y - cy, r, thick);
            const size_t idx = static_cast<size_t>(y) * size + x;
            if (channels == 1) {
                out[idx] = hit ? static_cast<float>(intensity)
                               : static_cast<float>(rng.uniform(0.0, 0.25));
            } else {
                if (hit) {
                    for (int c = 0; c < channels; ++c)
                        out[c * plane + idx] =
                            static_cast<float>(intensity * kPalette[cls % 10][c % 3]);
                } else {
                    const float bg = static_cast<float>(rng.uniform(0.0, 0.25));
                    for (int c = 0; c < channels; ++c) out[c * plane + idx] = bg;
                }
            }
        }
    }
}

LabeledSet make_split(int class_count, int n, uint64_t seed, int size, int channels,
                      SplitTag tag) {
    LabeledSet set;
    set.split_tag = tag;
    set.images = Tensor({n, channels, size, size});
    set.labels.resize(n);
    const size_t per = static_cast<size_t>(channels) * size * size;
    const uint64_t tag_id = static_cast<uint64_t>(tag);
    for (int i = 0; i < n; ++i) {
        Rng rng(Rng::derive(seed, streams::kSynthData, tag_id, static_cast<uint64_t>(i)));
        const int cls = i % class_count;  // balanced classes
        set.labels[i] = cls;
        render_sample(&set.images.data[per * i], channels, size, cls, rng);
    }
    return set;
}

}  // namespace

Dataset synth_shapes(int class_count, int n_total, uint64_t seed, int image_size, int channels) {
    if (class_count < 2 || class_count > 10)
        throw SpecError("synth shapes supports 2..10 classes");
    if (channels != 1 && channels != 3) throw SpecError("synth shapes supports 1 or 3 channels");
    if (image_size < 16) throw SpecError("synth image size must be >= 16");
    const int n_val = std::max(class_count, static_cast<int>(std::lround(0.10 * n_total)));
    const int n_train = n_total - n_val;
    if (n_train < class_count) throw SpecError("n_total too small for a 90/10 split");

    Dataset ds;
    ds.class_count = class_count;
    ds.input_shape = {channels, image_size, image_size};
    ds.seed = seed;
    ds.source = "synth";
    ds.id = "synth-c" + std::to_string(class_count) + "-n" + std::to_string(n_total) + "-s" +
            std::to_string(image_size) + "x" + std::to_string(channels) + "-seed" +
            std::to_string(seed);
    ds.train = make_split(class_count, n_train, seed, image_size, channels, SplitTag::train);
    ds.validation =
        make_split(class_count, n_val, seed, image_size, channels, SplitTag::validation);
    return ds;
}

// ---- IDX -------------------------------------------------------------------

namespace {

uint32_t read_be32(const unsigned char* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

std::vector<unsigned char> read_binary(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot read " + path);
    std::vector<unsigned char> buf(static_cast<size_t>(f.tellg()));
    f.seekg(0);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw IoError("read failed for " + path);
    return buf;
}

std::string hex32(uint32_t v) {
    char buf[11];
    std::snprintf(buf, sizeof(buf), "0x%08x", v);
    return buf;
}

}  // namespace

Tensor load_idx_images(const std::string& path) {
    const auto buf = read_binary(path);
    if (buf.size() < 16) throw FormatError("IDX image file too short for header", buf.size());
    const uint32_t magic = read_be32(buf.data());
    if (magic != 0x00000803u)
        throw FormatError("bad IDX image magic " + hex32(magic) + ", expected 0x00000803", 0);
    const uint32_t n = read_be32(buf.data() + 4);
    const uint32_t rows = read_be32(buf.data() + 8);
    const uint32_t cols = read_be32(buf.data() + 12);
    const size_t expected = 16 + static_cast<size_t>(n) * rows * cols;
    if (buf.size() != expected)
        throw FormatError("IDX image payload size mismatch: expected " + std::to_string(expected) +
                              " bytes, found " + std::to_string(buf.size()),
                          static_cast<long long>(std::min(buf.size(), expected)));
    Tensor t({static_cast<int>(n), 1, static_cast<int>(rows), static_cast<int>(cols)});
    for (size_t i = 0; i < t.data.size(); ++i) t.data[i] = buf[16 + i] / 255.0f;
    return t;
}

std::vector<int> load_idx_labels(const std::string& path) {
    const auto buf = read_binary(path);
    if (buf.size() < 8) throw FormatError("IDX label file too short for header", buf.size());
    const uint32_t magic = read_be32(buf.data());
    if (magic != 0x00000801u)
        throw FormatError("bad IDX label magic " + hex32(magic) + ", expected 0x00000801", 0);
    const uint32_t n = read_be32(buf.data() + 4);
    if (buf.size() != 8 + static_cast<size_t>(n))
        throw FormatError("IDX label payload size mismatch", static_cast<long long>(buf.size()));
    std::vector<int> labels(n);
    for (uint32_t i = 0; i < n; ++i) labels[i] = buf[8 + i];
    return labels;
}

Dataset prepare_idx(const std::string& images_path, const std::string& labels_path, uint64_t seed,
                    double validation_fraction) {
    Tensor images = load_idx_images(images_path);
    std::vector<int> labels = load_idx_labels(labels_path);
    const int n = images.shape[0];
    if (static_cast<int>(labels.size()) != n)
        throw FormatError("IDX image/label count mismatch: " + std::to_string(n) + " vs " +
                          std::to_string(labels.size()));
    int class_count = 0;
    for (int y : labels) class_count = std::max(class_count, y + 1);

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(Rng::derive(seed, streams::kSplit));
    rng.shuffle(order);
    const int n_val = std::max(1, static_cast<int>(std::lround(validation_fraction * n)));
    const int n_train = n - n_val;

    const size_t per = images.numel() / static_cast<size_t>(n);
    auto take = [&](int begin, int count, SplitTag tag) {
        LabeledSet s;
        s.split_tag = tag;
        std::vector<int> shape = images.shape;
        shape[0] = count;
        s.images = Tensor(shape);
        s.labels.resize(count);
        for (int i = 0; i < count; ++i) {
            std::copy_n(&images.data[per * order[begin + i]], per, &s.images.data[per * i]);
            s.labels[i] = labels[order[begin + i]];
        }
        return s;
    };

    Dataset ds;
    ds.class_count = class_count;
    ds.input_shape = {images.shape[1], images.shape[2], images.shape[3]};
    ds.seed = seed;
    ds.source = "idx";
    ds.id = "idx-n" + std::to_string(n) + "-seed" + std::to_string(seed);
    ds.train = take(0, n_train, SplitTag::train);
    ds.validation = take(n_train, n_val, SplitTag::validation);
    return ds;
}

// ---- internal on-disk format ------------------------------------------------

static_assert(std::endian::native == std::endian::little,
              "dataset serialization assumes a little-endian host");

namespace {

void write_blob(const fs::path& path, const void* ptr, size_t bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    f.write(static_cast<const char*>(ptr), static_cast<std::streamsize>(bytes));
    if (!f) throw IoError("write failed for " + path.string());
}

std::vector<char> read_blob(const fs::path& path, size_t expected_bytes) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot read " + path.string());
    const size_t actual = static_cast<size_t>(f.tellg());
    if (actual != expected_bytes)
        throw FormatError(path.filename().string() + " size mismatch: expected " +
                              std::to_string(expected_bytes) + " bytes, found " +
                              std::to_string(actual),
                          static_cast<long long>(std::min(actual, expected_bytes)));
    f.seekg(0);
    std::vector<char> buf(actual);
    f.read(buf.data(), static_cast<std::streamsize>(actual));
    if (!f) throw IoError("read failed for " + path.string());
    return buf;
}

void save_split(const fs::path& dir, const char* name, const LabeledSet& s) {
    write_blob(dir / (std::string(name) + "_images.bin"), s.images.data.data(),
               s.images.numel() * sizeof(float));
    std::vector<int32_t> labels(s.labels.begin(), s.labels.end());
    write_blob(dir / (std::string(name) + "_labels.bin"), labels.data(),
               labels.size() * sizeof(int32_t));
}

LabeledSet load_split(const fs::path& dir, const char* name, int count,
                      const std::vector<int>& sample_shape, SplitTag tag) {
    LabeledSet s;
    s.split_tag = tag;
    std::vector<int> shape = sample_shape;
    shape.insert(shape.begin(), count);
    s.images = Tensor(shape);
    auto img = read_blob(dir / (std::string(name) + "_images.bin"),
                         s.images.numel() * sizeof(float));
    std::memcpy(s.images.data.data(), img.data(), img.size());
    auto lab = read_blob(dir / (std::string(name) + "_labels.bin"),
                         static_cast<size_t>(count) * sizeof(int32_t));
    s.labels.resize(count);
    std::memcpy(s.labels.data(), lab.data(), lab.size());
    return s;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
    textio::KvFile kv;
    kv.add("format_version", "1");
    kv.add("dataset_id", ds.id);
    kv.add("class_count", std::to_string(ds.class_count));
    kv.add("input_shape", textio::join_ints(ds.input_shape));
    kv.add("train_count", std::to_string(ds.train.size()));
    kv.add("val_count", std::to_string(ds.validation.size()));
    kv.add("seed", std::to_string(ds.seed));
    kv.add("source", ds.source);
    textio::write_kv_file(kv, (fs::path(dir) / "dataset_manifest").string());
    save_split(dir, "train", ds.train);
    save_split(dir, "val", ds.validation);
}

Dataset load_dataset(const std::string& dir) {
    const fs::path manifest = fs::path(dir) / "dataset_manifest";
    if (!fs::exists(manifest)) throw IoError("no dataset_manifest in " + dir);
    textio::KvFile kv = textio::read_kv_file(manifest.string());
    if (kv.require_int("format_version") != 1)
        throw FormatError("unsupported dataset format_version " + kv.get("format_version"),
                          kv.offset_of("format_version"));
    Dataset ds;
    ds.id = kv.get("dataset_id");
    ds.class_count = static_cast<int>(kv.require_int("class_count"));
    ds.input_shape = textio::parse_int_list(kv.get("input_shape"));
    ds.seed = kv.require_u64("seed");
    ds.source = kv.get("source");
    const int n_train = static_cast<int>(kv.require_int("train_count"));
    const int n_val = static_cast<int>(kv.require_int("val_count"));
    ds.train = load_split(dir, "train", n_train, ds.input_shape, SplitTag::train);
    ds.validation = load_split(dir, "val", n_val, ds.input_shape, SplitTag::validation);

    for (const LabeledSet* s : {&ds.train, &ds.validation})
        for (int y : s->labels)
            if (y < 0 || y >= ds.class_count)
                throw FormatError("label " + std::to_string(y) + " out of range in " + dir);
    return ds;
}

}  // namespace trojanscope::data
