#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trojanscope/tensor.hpp"

namespace trojanscope::data {

enum class SplitTag { train, validation, trigger_eval };

// Images are [n, c, h, w] with values in [0, 1]; labels in [0, class_count).
struct LabeledSet {
    Tensor images;
    std::vector<int> labels;
    SplitTag split_tag = SplitTag::train;

    int size() const { return images.shape.empty() ? 0 : images.shape[0]; }
    std::vector<int> sample_shape() const {
        return {images.shape.begin() + 1, images.shape.end()};
    }
};

struct Dataset {
    std::string id;
    int class_count = 0;
    std::vector<int> input_shape;  // {c, h, w}
    LabeledSet train;
    LabeledSet validation;
    uint64_t seed = 0;
    std::string source;  // "synth" or "idx"
};

// Seeded synthetic shapes: class_count parametric glyphs (disk, hollow
// square, plus, diagonal cross, bars, ...) drawn with jittered position,
// size and intensity on a noisy background. n_total is split 90/10 into
// train/validation. Supports 1 or 3 channels.
Dataset synth_shapes(int class_count, int n_total, uint64_t seed, int image_size = 28,
                     int channels = 1);

// MNIST-style IDX files (big-endian magic 0x00000803 images / 0x00000801
// labels). Pixel bytes are scaled to [0, 1].
Tensor load_idx_images(const std::string& path);
std::vector<int> load_idx_labels(const std::string& path);

// Builds a dataset from IDX train files with a seeded 90/10 split.
Dataset prepare_idx(const std::string& images_path, const std::string& labels_path,
                    uint64_t seed, double validation_fraction = 0.10);

// Internal on-disk format: a directory with `dataset_manifest` (key=value)
// plus raw little-endian float32 image blobs and int32 label blobs.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace trojanscope::data
