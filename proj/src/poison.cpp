#include "trojanscope/poison.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trojanscope/textio.hpp"

namespace trojanscope::poison {

const char* trigger_family_name(TriggerFamily f) {
    return f == TriggerFamily::patch ? "patch" : "filter";
}
const char* patch_pattern_name(PatchPattern p) {
    switch (p) {
        case PatchPattern::square: return "square";
        case PatchPattern::cross: return "cross";
        case PatchPattern::checkerboard: return "checkerboard";
        case PatchPattern::random_bits: return "random_bits";
    }
    return "?";
}
const char* filter_pattern_name(FilterPattern p) {
    return p == FilterPattern::channel_scale ? "channel_scale" : "channel_shift";
}

TriggerFamily trigger_family_from_name(const std::string& s) {
    if (s == "patch") return TriggerFamily::patch;
    if (s == "filter") return TriggerFamily::filter;
    throw SpecError("unknown trigger family '" + s + "'");
}
PatchPattern patch_pattern_from_name(const std::string& s) {
    if (s == "square") return PatchPattern::square;
    if (s == "cross") return PatchPattern::cross;
    if (s == "checkerboard") return PatchPattern::checkerboard;
    if (s == "random_bits") return PatchPattern::random_bits;
    throw SpecError("unknown patch pattern '" + s + "'");
}
FilterPattern filter_pattern_from_name(const std::string& s) {
    if (s == "channel_scale") return FilterPattern::channel_scale;
    if (s == "channel_shift") return FilterPattern::channel_shift;
    throw SpecError("unknown filter pattern '" + s + "'");
}

const char* mapping_kind_name(MappingKind k) {
    switch (k) {
        case MappingKind::M2O: return "m2o";
        case MappingKind::M2M: return "m2m";
        case MappingKind::Mixed: return "mixed";
    }
    return "?";
}
MappingKind mapping_kind_from_name(const std::string& s) {
    if (s == "m2o" || s == "M2O") return MappingKind::M2O;
    if (s == "m2m" || s == "M2M") return MappingKind::M2M;
    if (s == "mixed" || s == "Mixed") return MappingKind::Mixed;
    throw SpecError("unknown mapping kind '" + s + "'");
}

int patch_side(const TriggerSpec& spec, int height, int width) {
    if (spec.area_fraction <= 0.0 || spec.area_fraction > 0.10)
        throw SpecError("trigger area_fraction must be in (0, 0.10]");
    int s = static_cast<int>(
        std::lround(std::sqrt(spec.area_fraction * static_cast<double>(height) * width)));
    s = std::max(1, s);
    if (s > std::min(height, width))
        throw SpecError("trigger patch side " + std::to_string(s) + " exceeds image extent " +
                        std::to_string(height) + "x" + std::to_string(width));
    return s;
}

// Bit mask of the s x s patch; 1 means the pixel takes the trigger color,
// 0 means it is overwritten with zero.
static std::vector<uint8_t> patch_mask(PatchPattern pattern, int s, uint64_t pattern_seed) {
    std::vector<uint8_t> mask(static_cast<size_t>(s) * s, 0);
    switch (pattern) {
        case PatchPattern::square:
            std::fill(mask.begin(), mask.end(), 1);
            break;
        case PatchPattern::cross: {
            const int mid = s / 2;
            for (int y = 0; y < s; ++y)
                for (int x = 0; x < s; ++x)
                    if (x == mid || y == mid) mask[static_cast<size_t>(y) * s + x] = 1;
            break;
        }
        case PatchPattern::checkerboard:
            for (int y = 0; y < s; ++y)
                for (int x = 0; x < s; ++x)
                    if ((x + y) % 2 == 0) mask[static_cast<size_t>(y) * s + x] = 1;
            break;
        case PatchPattern::random_bits: {
            Rng bits(Rng::derive(pattern_seed, streams::kTriggerPattern));
            for (auto& b : mask) b = bits.next_u64() & 1u;
            break;
        }
    }
    return mask;
}

Tensor stamp_trigger(const Tensor& image, const TriggerSpec& spec, Rng& rng) {
    if (image.shape.size() != 3) throw ShapeError("stamp_trigger expects a [c,h,w] image");
    const int channels = image.shape[0], h = image.shape[1], w = image.shape[2];
    Tensor out = image;
    const size_t plane = static_cast<size_t>(h) * w;

    if (spec.family == TriggerFamily::filter) {
        auto channel_value = [&](const std::vector<float>& v, int c, float fallback) {
            if (v.empty()) return fallback;
            return v[std::min<size_t>(c, v.size() - 1)];
        };
        for (int c = 0; c < channels; ++c) {
            const float scale = channel_value(spec.filter_scale, c, 1.0f);
            const float shift = channel_value(spec.filter_shift, c, 0.0f);
            float* p = &out.data[plane * c];
            for (size_t i = 0; i < plane; ++i)
                p[i] = std::clamp(scale * p[i] + shift, 0.0f, 1.0f);
        }
        return out;
    }

    const int s = patch_side(spec, h, w);
    int x0, y0;
    if (spec.random_location) {
        x0 = rng.uniform_int(w - s + 1);
        y0 = rng.uniform_int(h - s + 1);
    } else {
        x0 = spec.fixed_x;
        y0 = spec.fixed_y;
        if (x0 < 0 || y0 < 0 || x0 + s > w || y0 + s > h)
            throw SpecError("fixed trigger location (" + std::to_string(x0) + "," +
                            std::to_string(y0) + ") puts the patch outside the image");
    }
    const std::vector<uint8_t> mask = patch_mask(spec.patch_pattern, s, spec.pattern_seed);
    for (int c = 0; c < channels; ++c) {
        const float color =
            spec.color.empty() ? 1.0f : spec.color[std::min<size_t>(c, spec.color.size() - 1)];
        float* p = &out.data[plane * c];
        for (int dy = 0; dy < s; ++dy)
            for (int dx = 0; dx < s; ++dx)
                p[static_cast<size_t>(y0 + dy) * w + (x0 + dx)] =
                    mask[static_cast<size_t>(dy) * s + dx] ? std::clamp(color, 0.0f, 1.0f) : 0.0f;
    }
    return out;
}

LabelMapping make_m2o(int class_count, int target) {
    if (class_count < 2) throw SpecError("mapping needs class_count >= 2");
    if (target < 0 || target >= class_count) throw SpecError("M2O target out of range");
    LabelMapping m;
    m.kind = MappingKind::M2O;
    m.class_count = class_count;
    m.target = target;
    return m;
}

LabelMapping make_m2m(int class_count, int shift) {
    if (class_count < 2) throw SpecError("mapping needs class_count >= 2");
    shift = ((shift % class_count) + class_count) % class_count;
    if (shift == 0) throw SpecError("M2M shift must be nonzero mod class_count");
    LabelMapping m;
    m.kind = MappingKind::M2M;
    m.class_count = class_count;
    m.permutation.resize(class_count);
    for (int y = 0; y < class_count; ++y) m.permutation[y] = (y + shift) % class_count;
    validate_mapping(m);
    return m;
}

LabelMapping make_mixed(int class_count, int target) {
    if (class_count < 3) throw SpecError("Mixed mapping needs class_count >= 3");
    if (target < 0 || target >= class_count) throw SpecError("Mixed target out of range");
    LabelMapping m;
    m.kind = MappingKind::Mixed;
    m.class_count = class_count;
    m.target = target;
    m.partition.assign(class_count, MixedAction::unchanged);
    m.permutation.assign(class_count, 0);
    std::iota(m.permutation.begin(), m.permutation.end(), 0);
    const int third = (class_count + 2) / 3;
    // first third to the target, second third cyclically permuted among
    // themselves, remainder untouched
    std::vector<int> permuted_classes;
    for (int y = 0; y < class_count; ++y) {
        if (y < third)
            m.partition[y] = MixedAction::to_target;
        else if (y < 2 * third) {
            m.partition[y] = MixedAction::permuted;
            permuted_classes.push_back(y);
        }
    }
    if (permuted_classes.size() == 1) {
        // a single permuted class cannot avoid a fixed point; send it to
        // the target group instead
        m.partition[permuted_classes[0]] = MixedAction::to_target;
        permuted_classes.clear();
    }
    for (size_t i = 0; i < permuted_classes.size(); ++i)
        m.permutation[permuted_classes[i]] = permuted_classes[(i + 1) % permuted_classes.size()];
    validate_mapping(m);
    return m;
}

void validate_mapping(const LabelMapping& m) {
    if (m.class_count < 2) throw SpecError("mapping needs class_count >= 2");
    switch (m.kind) {
        case MappingKind::M2O:
            if (m.target < 0 || m.target >= m.class_count)
                throw SpecError("M2O target out of range");
            break;
        case MappingKind::M2M: {
            if (static_cast<int>(m.permutation.size()) != m.class_count)
                throw SpecError("M2M permutation must cover every class");
            std::vector<char> seen(m.class_count, 0);
            for (int y = 0; y < m.class_count; ++y) {
                const int t = m.permutation[y];
                if (t < 0 || t >= m.class_count) throw SpecError("M2M permutation out of range");
                if (t == y)
                    throw SpecError("M2M permutation has a fixed point at class " +
                                    std::to_string(y));
                if (seen[t]++) throw SpecError("M2M permutation is not a bijection");
            }
            break;
        }
        case MappingKind::Mixed: {
            if (static_cast<int>(m.partition.size()) != m.class_count)
                throw SpecError("Mixed partition must cover every class");
            if (m.target < 0 || m.target >= m.class_count)
                throw SpecError("Mixed target out of range");
            for (int y = 0; y < m.class_count; ++y) {
                if (m.partition[y] != MixedAction::permuted) continue;
                if (static_cast<int>(m.permutation.size()) != m.class_count)
                    throw SpecError("Mixed permutation must cover every class");
                const int t = m.permutation[y];
                if (t < 0 || t >= m.class_count) throw SpecError("Mixed permutation out of range");
                if (t == y)
                    throw SpecError("Mixed permuted class " + std::to_string(y) +
                                    " maps to itself");
                if (m.partition[t] != MixedAction::permuted)
                    throw SpecError("Mixed permutation must stay within the permuted classes");
            }
            break;
        }
    }
}

int map_label(int y, const LabelMapping& mapping) {
    if (y < 0 || y >= mapping.class_count)
        throw SpecError("label " + std::to_string(y) + " out of range for mapping");
    switch (mapping.kind) {
        case MappingKind::M2O: return mapping.target;
        case MappingKind::M2M: return mapping.permutation[y];
        case MappingKind::Mixed:
            switch (mapping.partition[y]) {
                case MixedAction::to_target: return mapping.target;
                case MixedAction::permuted: return mapping.permutation[y];
                case MixedAction::unchanged: return y;
            }
    }
    return y;
}

PoisonedData poison_dataset(const data::LabeledSet& train, const data::LabeledSet& heldout,
                            const PoisonConfig& cfg) {
    const int n = train.size();
    if (n == 0) throw SpecError("cannot poison an empty training set");
    if (cfg.ratio_P <= 0.0 || cfg.ratio_P > 0.5)
        throw SpecError("poisoning ratio must be in (0, 0.5]");
    if (cfg.noise_amplitude < 0.0 || cfg.noise_amplitude > 0.2)
        throw SpecError("noise_amplitude must be in [0, 0.2]");
    validate_mapping(cfg.mapping);
    if (cfg.ratio_P * n < 1.0)
        throw SpecError("poisoning degenerate: P*n = " +
                        textio::format_double(cfg.ratio_P * n) + " < 1 for n=" +
                        std::to_string(n) + ", P=" + textio::format_double(cfg.ratio_P));
    const int n_poison = static_cast<int>(std::lround(cfg.ratio_P * n));

    PoisonedData out;
    out.train = train;
    out.train.split_tag = data::SplitTag::train;

    // uniform sample without replacement via partial Fisher-Yates
    Rng pick(Rng::derive(cfg.seed, streams::kPoisonPick));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int i = 0; i < n_poison; ++i) {
        int j = i + pick.uniform_int(n - i);
        std::swap(order[i], order[j]);
    }
    out.poisoned_indices.assign(order.begin(), order.begin() + n_poison);
    std::sort(out.poisoned_indices.begin(), out.poisoned_indices.end());

    const size_t per = train.images.numel() / static_cast<size_t>(n);
    const std::vector<int> sample_shape = train.sample_shape();
    Rng stamp_rng(Rng::derive(cfg.seed, streams::kTriggerStamp));
    for (int idx : out.poisoned_indices) {
        Tensor img(sample_shape);
        std::copy_n(&train.images.data[per * idx], per, img.data.begin());
        Tensor stamped = stamp_trigger(img, cfg.trigger, stamp_rng);
        std::copy_n(stamped.data.begin(), per, &out.train.images.data[per * idx]);
        out.train.labels[idx] = map_label(train.labels[idx], cfg.mapping);
    }

    if (cfg.noise_amplitude > 0.0) {
        Rng noise(Rng::derive(cfg.seed, streams::kNoise));
        for (float& v : out.train.images.data)
            v = std::clamp(
                v + static_cast<float>(noise.uniform(-cfg.noise_amplitude, cfg.noise_amplitude)),
                0.0f, 1.0f);
    }

    // fully stamped copy of the held-out split for fooling-rate measurement
    const int n_eval = heldout.size();
    if (n_eval == 0) throw SpecError("held-out split is empty");
    out.trigger_eval.mapping_kind = cfg.mapping.kind;
    out.trigger_eval.images = Tensor(heldout.images.shape);
    out.trigger_eval.mapped_labels.resize(n_eval);
    out.trigger_eval.label_changed.resize(n_eval);
    Rng eval_rng(Rng::derive(cfg.seed, streams::kTriggerStamp, 1));
    for (int i = 0; i < n_eval; ++i) {
        Tensor img(sample_shape);
        std::copy_n(&heldout.images.data[per * i], per, img.data.begin());
        Tensor stamped = stamp_trigger(img, cfg.trigger, eval_rng);
        std::copy_n(stamped.data.begin(), per, &out.trigger_eval.images.data[per * i]);
        const int mapped = map_label(heldout.labels[i], cfg.mapping);
        out.trigger_eval.mapped_labels[i] = mapped;
        out.trigger_eval.label_changed[i] = mapped != heldout.labels[i] ? 1 : 0;
    }
    return out;
}

}  // namespace trojanscope::poison
