#include "trojanscope/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "trojanscope/textio.hpp"

static_assert(std::endian::native == std::endian::little,
              "model serialization assumes a little-endian host");
static_assert(sizeof(float) == 4);

namespace trojanscope::nn {

namespace fs = std::filesystem;
using textio::KvFile;

static std::string layer_line(const LayerSpec& l) {
    std::string s = layer_kind_name(l.kind);
    if (l.kind == LayerKind::dense) {
        s += " in_features=" + std::to_string(l.in_features) +
             " out_features=" + std::to_string(l.out_features);
    } else if (l.kind == LayerKind::conv2d) {
        s += " in_channels=" + std::to_string(l.in_channels) +
             " out_channels=" + std::to_string(l.out_channels) +
             " kernel=" + std::to_string(l.kernel) + " stride=" + std::to_string(l.stride);
    }
    return s;
}

static int parse_field(const std::string& line, const std::string& name, long long offset) {
    const std::string needle = name + "=";
    size_t pos = line.find(needle);
    if (pos == std::string::npos)
        throw FormatError("layer entry missing " + name + ": '" + line + "'", offset);
    return std::stoi(line.substr(pos + needle.size()));
}

static LayerSpec parse_layer_line(const std::string& line, long long offset) {
    size_t sp = line.find(' ');
    std::string kind_name = sp == std::string::npos ? line : line.substr(0, sp);
    LayerKind kind;
    try {
        kind = layer_kind_from_name(kind_name);
    } catch (const FormatError& e) {
        throw FormatError(e.what(), offset);
    }
    switch (kind) {
        case LayerKind::dense:
            return LayerSpec::dense(parse_field(line, "in_features", offset),
                                    parse_field(line, "out_features", offset));
        case LayerKind::conv2d:
            return LayerSpec::conv2d(
                parse_field(line, "in_channels", offset), parse_field(line, "out_channels", offset),
                parse_field(line, "kernel", offset), parse_field(line, "stride", offset));
        case LayerKind::relu: return LayerSpec::relu();
        case LayerKind::flatten: return LayerSpec::flatten();
    }
    throw FormatError("unreachable layer kind", offset);
}

void save_model(const Model& m, const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());

    KvFile kv;
    kv.add("format_version", std::to_string(kModelFormatVersion));
    kv.add("arch_id", m.arch_id);
    kv.add("class_count", std::to_string(m.class_count));
    kv.add("input_shape", textio::join_ints(m.input_shape));
    kv.add("seed", std::to_string(m.seed));
    kv.add("trained_epochs", std::to_string(m.trained_epochs));
    std::string losses;
    for (size_t i = 0; i < m.epoch_loss.size(); ++i) {
        if (i) losses += ',';
        losses += textio::format_double(m.epoch_loss[i]);
    }
    kv.add("epoch_loss", losses);
    kv.add("layer_count", std::to_string(m.layers.size()));
    for (size_t i = 0; i < m.layers.size(); ++i)
        kv.add("layer." + std::to_string(i), layer_line(m.layers[i]));

    // weights.bin: weight then bias per parameterized layer, layer order
    std::string blob;
    size_t tensor_idx = 0;
    KvFile tensors;
    for (size_t i = 0; i < m.layers.size(); ++i) {
        if (!m.layers[i].has_params()) continue;
        for (int part = 0; part < 2; ++part) {
            const Tensor& t = part == 0 ? m.weights[i] : m.biases[i];
            const char* part_name = part == 0 ? "weight" : "bias";
            const size_t offset = blob.size();
            const size_t length = t.numel() * sizeof(float);
            blob.append(reinterpret_cast<const char*>(t.data.data()), length);
            tensors.add("tensor." + std::to_string(tensor_idx++),
                        "layer" + std::to_string(i) + "." + part_name +
                            " offset=" + std::to_string(offset) +
                            " length=" + std::to_string(length));
        }
    }
    kv.add("tensor_count", std::to_string(tensor_idx));
    for (const auto& [k, v] : tensors.entries) kv.add(k, v);
    kv.add("weights_bytes", std::to_string(blob.size()));

    textio::write_kv_file(kv, (fs::path(dir) / "manifest").string());

    std::ofstream wf(fs::path(dir) / "weights.bin", std::ios::binary);
    if (!wf) throw IoError("cannot write weights.bin in " + dir);
    wf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!wf) throw IoError("write failed for weights.bin in " + dir);
}

Model load_model(const std::string& dir) {
    const fs::path manifest_path = fs::path(dir) / "manifest";
    if (!fs::exists(manifest_path)) throw IoError("no model manifest at " + manifest_path.string());
    KvFile kv = textio::read_kv_file(manifest_path.string());

    const long long version = kv.require_int("format_version");
    if (version != kModelFormatVersion)
        throw FormatError("unsupported model format_version " + std::to_string(version) +
                              " (this toolkit reads version " +
                              std::to_string(kModelFormatVersion) + ")",
                          kv.offset_of("format_version"));

    Model m;
    m.arch_id = kv.get("arch_id");
    m.class_count = static_cast<int>(kv.require_int("class_count"));
    m.input_shape = textio::parse_int_list(kv.get("input_shape"));
    m.seed = kv.require_u64("seed");
    m.trained_epochs = static_cast<int>(kv.require_int("trained_epochs"));
    for (const std::string& part : textio::split(kv.get_or("epoch_loss", ""), ','))
        if (!part.empty()) m.epoch_loss.push_back(std::stod(part));

    const int layer_count = static_cast<int>(kv.require_int("layer_count"));
    for (int i = 0; i < layer_count; ++i) {
        const std::string key = "layer." + std::to_string(i);
        if (!kv.has(key)) throw FormatError("manifest missing " + key);
        m.layers.push_back(parse_layer_line(kv.get(key), kv.offset_of(key)));
    }
    m.weights.assign(m.layers.size(), Tensor());
    m.biases.assign(m.layers.size(), Tensor());

    try {
        infer_shapes(m);
    } catch (const ShapeError& e) {
        throw FormatError(std::string("layer stack does not compose: ") + e.what());
    }

    const size_t expected_bytes = static_cast<size_t>(kv.require_int("weights_bytes"));
    const fs::path weights_path = fs::path(dir) / "weights.bin";
    std::ifstream wf(weights_path, std::ios::binary | std::ios::ate);
    if (!wf) throw IoError("cannot read " + weights_path.string());
    const size_t actual_bytes = static_cast<size_t>(wf.tellg());
    if (actual_bytes != expected_bytes)
        throw FormatError("weights.bin truncated or padded: expected " +
                              std::to_string(expected_bytes) + " bytes, found " +
                              std::to_string(actual_bytes),
                          static_cast<long long>(std::min(actual_bytes, expected_bytes)));
    wf.seekg(0);
    std::vector<char> blob(actual_bytes);
    wf.read(blob.data(), static_cast<std::streamsize>(actual_bytes));
    if (!wf) throw IoError("read failed for " + weights_path.string());

    const int tensor_count = static_cast<int>(kv.require_int("tensor_count"));
    int tensor_idx = 0;
    for (size_t i = 0; i < m.layers.size(); ++i) {
        if (!m.layers[i].has_params()) continue;
        for (int part = 0; part < 2; ++part) {
            const std::string key = "tensor." + std::to_string(tensor_idx++);
            if (!kv.has(key)) throw FormatError("manifest missing " + key);
            const std::string& line = kv.get(key);
            const long long line_off = kv.offset_of(key);
            const std::string expect_name =
                "layer" + std::to_string(i) + "." + (part == 0 ? "weight" : "bias");
            if (line.rfind(expect_name + " ", 0) != 0)
                throw FormatError("tensor entry '" + line + "' does not match expected " +
                                      expect_name,
                                  line_off);
            const size_t offset = static_cast<size_t>(parse_field(line, "offset", line_off));
            const size_t length = static_cast<size_t>(parse_field(line, "length", line_off));
            const LayerSpec& l = m.layers[i];
            std::vector<int> shape;
            if (l.kind == LayerKind::dense)
                shape = part == 0 ? std::vector<int>{l.out_features, l.in_features}
                                  : std::vector<int>{l.out_features};
            else
                shape = part == 0
                            ? std::vector<int>{l.out_channels, l.in_channels, l.kernel, l.kernel}
                            : std::vector<int>{l.out_channels};
            Tensor t(shape);
            if (length != t.numel() * sizeof(float))
                throw FormatError("tensor " + expect_name + " length " + std::to_string(length) +
                                      " does not match shape " + t.shape_str(),
                                  line_off);
            if (offset + length > blob.size())
                throw FormatError("tensor " + expect_name + " extends past end of weights.bin",
                                  static_cast<long long>(offset));
            std::memcpy(t.data.data(), blob.data() + offset, length);
            if (part == 0)
                m.weights[i] = std::move(t);
            else
                m.biases[i] = std::move(t);
        }
    }
    if (tensor_idx != tensor_count)
        throw FormatError("tensor_count " + std::to_string(tensor_count) + " does not match " +
                          std::to_string(tensor_idx) + " parameter tensors");
    return m;
}

}  // namespace trojanscope::nn
