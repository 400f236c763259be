#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trojanscope/dataset.hpp"
#include "trojanscope/rng.hpp"
#include "trojanscope/tensor.hpp"

namespace trojanscope::poison {

enum class TriggerFamily { patch, filter };
enum class PatchPattern { square, cross, checkerboard, random_bits };
enum class FilterPattern { channel_scale, channel_shift };

const char* trigger_family_name(TriggerFamily f);
const char* patch_pattern_name(PatchPattern p);
const char* filter_pattern_name(FilterPattern p);
TriggerFamily trigger_family_from_name(const std::string& s);
PatchPattern patch_pattern_from_name(const std::string& s);
FilterPattern filter_pattern_from_name(const std::string& s);

// Square patch of side s = round(sqrt(area_fraction*H*W)) stamped over the
// image (replacement, not blending), or a global per-channel affine filter.
struct TriggerSpec {
    TriggerFamily family = TriggerFamily::patch;
    PatchPattern patch_pattern = PatchPattern::square;
    FilterPattern filter_pattern = FilterPattern::channel_scale;
    double area_fraction = 0.02;          // patch family only
    std::vector<float> color = {1.0f};    // per channel, binary for 1-channel images
    bool random_location = true;          // patch family only
    int fixed_x = 0, fixed_y = 0;         // top-left when random_location=false
    std::vector<float> filter_scale = {1.0f};  // filter family
    std::vector<float> filter_shift = {0.0f};
    uint64_t pattern_seed = 0;            // fixes random_bits layout
};

// Patch side for an HxW image; throws SpecError if the patch cannot fit.
int patch_side(const TriggerSpec& spec, int height, int width);

// Returns a stamped copy; the input image [c,h,w] is untouched. rng drives
// the random patch location only (the bit pattern comes from pattern_seed).
Tensor stamp_trigger(const Tensor& image, const TriggerSpec& spec, Rng& rng);

enum class MappingKind { M2O, M2M, Mixed };
const char* mapping_kind_name(MappingKind k);
MappingKind mapping_kind_from_name(const std::string& s);

enum class MixedAction { to_target, permuted, unchanged };

struct LabelMapping {
    MappingKind kind = MappingKind::M2O;
    int class_count = 0;
    int target = 0;                       // M2O / Mixed to_target classes
    std::vector<int> permutation;         // M2M / Mixed permuted classes
    std::vector<MixedAction> partition;   // Mixed, one action per class
};

LabelMapping make_m2o(int class_count, int target);
// Cyclic shift by `shift` (mod c), shift != 0 so no class maps to itself.
LabelMapping make_m2m(int class_count, int shift = 1);
// Roughly one third of classes to target, one third cyclically permuted,
// one third unchanged.
LabelMapping make_mixed(int class_count, int target);

// Throws SpecError on fixed points in the mapped classes, bad indices, etc.
void validate_mapping(const LabelMapping& m);

int map_label(int y, const LabelMapping& mapping);

struct PoisonConfig {
    TriggerSpec trigger;
    LabelMapping mapping;
    double ratio_P = 0.175;        // paper range is [0.15, 0.20]
    double noise_amplitude = 0.05;  // background-noise regularizer
    uint64_t seed = 0;
};

// Stamped copy of a held-out split with post-mapping labels, used for
// fooling-rate measurement. `label_changed[i]` is false when the mapping
// left the ground truth unchanged (Mixed can do that).
struct TriggerEval {
    Tensor images;
    std::vector<int> mapped_labels;
    std::vector<uint8_t> label_changed;
    MappingKind mapping_kind = MappingKind::M2O;

    int size() const { return images.shape.empty() ? 0 : images.shape[0]; }
};

struct PoisonedData {
    data::LabeledSet train;
    TriggerEval trigger_eval;
    std::vector<int> poisoned_indices;  // sorted, exactly round(P*n) entries
};

// Replaces exactly round(P*n) training samples (chosen uniformly without
// replacement) with stamped+remapped versions, adds uniform background
// noise of the configured amplitude to every training image, and builds the
// trigger_eval set from the held-out split.
PoisonedData poison_dataset(const data::LabeledSet& train, const data::LabeledSet& heldout,
                            const PoisonConfig& cfg);

}  // namespace trojanscope::poison
