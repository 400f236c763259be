#include "trojanscope/model.hpp"

#include <algorithm>
#include <cmath>

#include "trojanscope/rng.hpp"

namespace trojanscope::nn {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::flatten: return "flatten";
    }
    return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
    if (name == "dense") return LayerKind::dense;
    if (name == "conv2d") return LayerKind::conv2d;
    if (name == "relu") return LayerKind::relu;
    if (name == "flatten") return LayerKind::flatten;
    throw FormatError("unknown layer kind '" + name + "'");
}

static int conv_out_extent(int in, int kernel, int stride) {
    return (in - kernel) / stride + 1;
}

std::vector<std::vector<int>> infer_shapes(const Model& m) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur = m.input_shape;
    for (size_t i = 0; i < m.layers.size(); ++i) {
        const LayerSpec& l = m.layers[i];
        switch (l.kind) {
            case LayerKind::dense: {
                if (cur.size() != 1 || cur[0] != l.in_features)
                    throw ShapeError("layer " + std::to_string(i) + ": dense expects [" +
                                     std::to_string(l.in_features) + "], got " +
                                     Tensor(cur).shape_str());
                if (l.in_features <= 0 || l.out_features <= 0)
                    throw ShapeError("dense dims must be positive");
                cur = {l.out_features};
                break;
            }
            case LayerKind::conv2d: {
                if (cur.size() != 3 || cur[0] != l.in_channels)
                    throw ShapeError("layer " + std::to_string(i) + ": conv2d expects [" +
                                     std::to_string(l.in_channels) + ",h,w], got " +
                                     Tensor(cur).shape_str());
                if (l.kernel <= 0 || l.stride <= 0 || l.out_channels <= 0)
                    throw ShapeError("conv2d dims must be positive");
                if (l.kernel > cur[1] || l.kernel > cur[2])
                    throw ShapeError("layer " + std::to_string(i) + ": kernel " +
                                     std::to_string(l.kernel) + " exceeds input extent " +
                                     Tensor(cur).shape_str());
                cur = {l.out_channels, conv_out_extent(cur[1], l.kernel, l.stride),
                       conv_out_extent(cur[2], l.kernel, l.stride)};
                break;
            }
            case LayerKind::relu:
                break;
            case LayerKind::flatten: {
                int n = 1;
                for (int d : cur) n *= d;
                cur = {n};
                break;
            }
        }
        out.push_back(cur);
    }
    if (cur.size() != 1 || cur[0] != m.class_count)
        throw ShapeError("final layer output " + Tensor(cur).shape_str() + " != class_count " +
                         std::to_string(m.class_count));
    return out;
}

Model make_model(const std::string& arch_id, const std::vector<int>& input_shape, int class_count) {
    if (input_shape.size() != 3) throw SpecError("input_shape must be {c,h,w}");
    if (class_count < 2) throw SpecError("class_count must be >= 2");
    Model m;
    m.arch_id = arch_id;
    m.class_count = class_count;
    m.input_shape = input_shape;
    const int c = input_shape[0], h = input_shape[1], w = input_shape[2];
    if (arch_id == "mlp-2") {
        m.layers = {LayerSpec::flatten(), LayerSpec::dense(c * h * w, 128), LayerSpec::relu(),
                    LayerSpec::dense(128, class_count)};
    } else if (arch_id == "cnn-s") {
        int h1 = conv_out_extent(h, 3, 2), w1 = conv_out_extent(w, 3, 2);
        int h2 = conv_out_extent(h1, 3, 2), w2 = conv_out_extent(w1, 3, 2);
        m.layers = {LayerSpec::conv2d(c, 8, 3, 2),  LayerSpec::relu(),
                    LayerSpec::conv2d(8, 16, 3, 2), LayerSpec::relu(),
                    LayerSpec::flatten(),           LayerSpec::dense(16 * h2 * w2, class_count)};
    } else if (arch_id == "cnn-m") {
        int h1 = conv_out_extent(h, 3, 2), w1 = conv_out_extent(w, 3, 2);
        int h2 = conv_out_extent(h1, 3, 2), w2 = conv_out_extent(w1, 3, 2);
        int h3 = conv_out_extent(h2, 3, 1), w3 = conv_out_extent(w2, 3, 1);
        m.layers = {LayerSpec::conv2d(c, 8, 3, 2),   LayerSpec::relu(),
                    LayerSpec::conv2d(8, 16, 3, 2),  LayerSpec::relu(),
                    LayerSpec::conv2d(16, 32, 3, 1), LayerSpec::relu(),
                    LayerSpec::flatten(),            LayerSpec::dense(32 * h3 * w3, 64),
                    LayerSpec::relu(),               LayerSpec::dense(64, class_count)};
    } else {
        throw SpecError("unknown arch_id '" + arch_id + "' (expected mlp-2, cnn-s, cnn-m)");
    }
    m.weights.resize(m.layers.size());
    m.biases.resize(m.layers.size());
    infer_shapes(m);
    return m;
}

void init_params(Model& m, uint64_t seed) {
    m.seed = seed;
    m.weights.assign(m.layers.size(), Tensor());
    m.biases.assign(m.layers.size(), Tensor());
    for (size_t i = 0; i < m.layers.size(); ++i) {
        const LayerSpec& l = m.layers[i];
        if (!l.has_params()) continue;
        Rng rng(Rng::derive(seed, streams::kWeightInit, i));
        int fan_in, fan_out;
        if (l.kind == LayerKind::dense) {
            fan_in = l.in_features;
            fan_out = l.out_features;
            m.weights[i] = Tensor({l.out_features, l.in_features});
            m.biases[i] = Tensor({l.out_features});
        } else {
            fan_in = l.in_channels * l.kernel * l.kernel;
            fan_out = l.out_channels * l.kernel * l.kernel;
            m.weights[i] = Tensor({l.out_channels, l.in_channels, l.kernel, l.kernel});
            m.biases[i] = Tensor({l.out_channels});
        }
        const double a = std::sqrt(6.0 / (fan_in + fan_out));
        for (float& v : m.weights[i].data) v = static_cast<float>(rng.uniform(-a, a));
        // biases start at zero
    }
}

// ---- layer kernels -------------------------------------------------------

static Tensor dense_fwd(const Tensor& x, const Tensor& W, const Tensor& b) {
    const int n = x.shape[0], in = x.shape[1], out = W.shape[0];
    Tensor y({n, out});
    for (int i = 0; i < n; ++i) {
        const float* xi = &x.data[static_cast<size_t>(i) * in];
        float* yi = &y.data[static_cast<size_t>(i) * out];
        for (int o = 0; o < out; ++o) {
            const float* wo = &W.data[static_cast<size_t>(o) * in];
            float acc = b.data[o];
            for (int k = 0; k < in; ++k) acc += xi[k] * wo[k];
            yi[o] = acc;
        }
    }
    return y;
}

static Tensor dense_bwd_input(const Tensor& gy, const Tensor& W) {
    const int n = gy.shape[0], out = gy.shape[1], in = W.shape[1];
    Tensor gx({n, in});
    for (int i = 0; i < n; ++i) {
        float* gxi = &gx.data[static_cast<size_t>(i) * in];
        const float* gyi = &gy.data[static_cast<size_t>(i) * out];
        for (int o = 0; o < out; ++o) {
            const float g = gyi[o];
            if (g == 0.0f) continue;
            const float* wo = &W.data[static_cast<size_t>(o) * in];
            for (int k = 0; k < in; ++k) gxi[k] += g * wo[k];
        }
    }
    return gx;
}

static void dense_bwd_params(const Tensor& x, const Tensor& gy, Tensor& gW, Tensor& gb) {
    const int n = x.shape[0], in = x.shape[1], out = gy.shape[1];
    for (int i = 0; i < n; ++i) {
        const float* xi = &x.data[static_cast<size_t>(i) * in];
        const float* gyi = &gy.data[static_cast<size_t>(i) * out];
        for (int o = 0; o < out; ++o) {
            const float g = gyi[o];
            gb.data[o] += g;
            if (g == 0.0f) continue;
            float* gwo = &gW.data[static_cast<size_t>(o) * in];
            for (int k = 0; k < in; ++k) gwo[k] += g * xi[k];
        }
    }
}

static Tensor conv_fwd(const Tensor& x, const Tensor& W, const Tensor& b, int stride) {
    const int n = x.shape[0], ic = x.shape[1], h = x.shape[2], w = x.shape[3];
    const int oc = W.shape[0], k = W.shape[2];
    const int oh = conv_out_extent(h, k, stride), ow = conv_out_extent(w, k, stride);
    Tensor y({n, oc, oh, ow});
    const size_t xs_c = static_cast<size_t>(h) * w;
    const size_t xs_n = static_cast<size_t>(ic) * xs_c;
    const size_t ws_i = static_cast<size_t>(k) * k;
    const size_t ws_o = static_cast<size_t>(ic) * ws_i;
    const size_t ys_c = static_cast<size_t>(oh) * ow;
    const size_t ys_n = static_cast<size_t>(oc) * ys_c;
    for (int i = 0; i < n; ++i) {
        const float* xn = &x.data[i * xs_n];
        float* yn = &y.data[i * ys_n];
        for (int o = 0; o < oc; ++o) {
            const float* wo = &W.data[o * ws_o];
            const float bias = b.data[o];
            float* yo = &yn[o * ys_c];
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    float acc = bias;
                    for (int c = 0; c < ic; ++c) {
                        const float* xc = &xn[c * xs_c + (oy * stride) * w + ox * stride];
                        const float* wc = &wo[c * ws_i];
                        for (int ky = 0; ky < k; ++ky) {
                            const float* xr = &xc[ky * w];
                            const float* wr = &wc[ky * k];
                            for (int kx = 0; kx < k; ++kx) acc += xr[kx] * wr[kx];
                        }
                    }
                    yo[oy * ow + ox] = acc;
                }
            }
        }
    }
    return y;
}

static Tensor conv_bwd_input(const Tensor& gy, const Tensor& W, const std::vector<int>& xshape,
                             int stride) {
    const int n = gy.shape[0], oc = gy.shape[1], oh = gy.shape[2], ow = gy.shape[3];
    const int ic = W.shape[1], k = W.shape[2];
    const int h = xshape[2], w = xshape[3];
    Tensor gx({n, ic, h, w});
    const size_t xs_c = static_cast<size_t>(h) * w;
    const size_t xs_n = static_cast<size_t>(ic) * xs_c;
    const size_t ws_i = static_cast<size_t>(k) * k;
    const size_t ws_o = static_cast<size_t>(ic) * ws_i;
    const size_t ys_c = static_cast<size_t>(oh) * ow;
    const size_t ys_n = static_cast<size_t>(oc) * ys_c;
    for (int i = 0; i < n; ++i) {
        float* gxn = &gx.data[i * xs_n];
        const float* gyn = &gy.data[i * ys_n];
        for (int o = 0; o < oc; ++o) {
            const float* wo = &W.data[o * ws_o];
            const float* gyo = &gyn[o * ys_c];
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    const float g = gyo[oy * ow + ox];
                    if (g == 0.0f) continue;
                    for (int c = 0; c < ic; ++c) {
                        float* gxc = &gxn[c * xs_c + (oy * stride) * w + ox * stride];
                        const float* wc = &wo[c * ws_i];
                        for (int ky = 0; ky < k; ++ky) {
                            float* gxr = &gxc[ky * w];
                            const float* wr = &wc[ky * k];
                            for (int kx = 0; kx < k; ++kx) gxr[kx] += g * wr[kx];
                        }
                    }
                }
            }
        }
    }
    return gx;
}

static void conv_bwd_params(const Tensor& x, const Tensor& gy, int stride, Tensor& gW,
                            Tensor& gb) {
    const int n = x.shape[0], ic = x.shape[1], h = x.shape[2], w = x.shape[3];
    const int oc = gy.shape[1], oh = gy.shape[2], ow = gy.shape[3];
    const int k = gW.shape[2];
    const size_t xs_c = static_cast<size_t>(h) * w;
    const size_t xs_n = static_cast<size_t>(ic) * xs_c;
    const size_t ws_i = static_cast<size_t>(k) * k;
    const size_t ws_o = static_cast<size_t>(ic) * ws_i;
    const size_t ys_c = static_cast<size_t>(oh) * ow;
    const size_t ys_n = static_cast<size_t>(oc) * ys_c;
    for (int i = 0; i < n; ++i) {
        const float* xn = &x.data[i * xs_n];
        const float* gyn = &gy.data[i * ys_n];
        for (int o = 0; o < oc; ++o) {
            float* gwo = &gW.data[o * ws_o];
            const float* gyo = &gyn[o * ys_c];
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    const float g = gyo[oy * ow + ox];
                    gb.data[o] += g;
                    if (g == 0.0f) continue;
                    for (int c = 0; c < ic; ++c) {
                        const float* xc = &xn[c * xs_c + (oy * stride) * w + ox * stride];
                        float* gwc = &gwo[c * ws_i];
                        for (int ky = 0; ky < k; ++ky) {
                            const float* xr = &xc[ky * w];
                            float* gwr = &gwc[ky * k];
                            for (int kx = 0; kx < k; ++kx) gwr[kx] += g * xr[kx];
                        }
                    }
                }
            }
        }
    }
}

static Tensor relu_fwd(const Tensor& x) {
    Tensor y = x;
    for (float& v : y.data) v = v > 0.0f ? v : 0.0f;
    return y;
}

static Tensor relu_bwd(const Tensor& x, const Tensor& gy) {
    Tensor gx = gy;
    for (size_t i = 0; i < gx.data.size(); ++i)
        if (x.data[i] <= 0.0f) gx.data[i] = 0.0f;
    return gx;
}

static Tensor flatten_fwd(const Tensor& x) {
    int n = x.shape[0];
    int f = static_cast<int>(x.numel()) / n;
    return Tensor({n, f}, x.data);
}

// ---- model-level passes --------------------------------------------------

static void check_batch_shape(const Model& m, const Tensor& batch) {
    std::vector<int> expect = m.input_shape;
    expect.insert(expect.begin(), batch.shape.empty() ? 0 : batch.shape[0]);
    if (batch.shape.size() != expect.size() ||
        !std::equal(batch.shape.begin() + 1, batch.shape.end(), expect.begin() + 1))
        throw ShapeError("input shape " + batch.shape_str() + " does not match model input " +
                         Tensor(m.input_shape).shape_str());
    if (m.weights.size() != m.layers.size() || m.biases.size() != m.layers.size())
        throw SpecError("model has no parameters; call init_params or train first");
    for (size_t i = 0; i < m.layers.size(); ++i)
        if (m.layers[i].has_params() && m.weights[i].numel() == 0)
            throw SpecError("model has no parameters; call init_params or train first");
}

Tensor forward(const Model& m, const Tensor& batch, ForwardTrace& trace) {
    check_batch_shape(m, batch);
    trace.acts.clear();
    trace.acts.reserve(m.layers.size() + 1);
    trace.acts.push_back(batch);
    for (size_t i = 0; i < m.layers.size(); ++i) {
        const LayerSpec& l = m.layers[i];
        const Tensor& x = trace.acts.back();
        switch (l.kind) {
            case LayerKind::dense: trace.acts.push_back(dense_fwd(x, m.weights[i], m.biases[i])); break;
            case LayerKind::conv2d:
                trace.acts.push_back(conv_fwd(x, m.weights[i], m.biases[i], l.stride));
                break;
            case LayerKind::relu: trace.acts.push_back(relu_fwd(x)); break;
            case LayerKind::flatten: trace.acts.push_back(flatten_fwd(x)); break;
        }
    }
    return trace.acts.back();
}

Tensor forward(const Model& m, const Tensor& batch) {
    ForwardTrace trace;
    return forward(m, batch, trace);
}

std::vector<int> predict(const Model& m, const Tensor& batch) {
    Tensor logits = forward(m, batch);
    const int n = logits.shape[0], c = logits.shape[1];
    std::vector<int> out(n);
    for (int i = 0; i < n; ++i) {
        const float* li = &logits.data[static_cast<size_t>(i) * c];
        int best = 0;
        for (int j = 1; j < c; ++j)
            if (li[j] > li[best]) best = j;  // ties keep the lowest index
        out[i] = best;
    }
    return out;
}

int predict_one(const Model& m, const Tensor& x) {
    return predict(m, x.shape.size() == m.input_shape.size() ? as_batch_of_one(x) : x)[0];
}

// Backprops an upstream gradient on the network output down to the input.
static Tensor backprop_input(const Model& m, const ForwardTrace& trace, Tensor grad) {
    for (int i = static_cast<int>(m.layers.size()) - 1; i >= 0; --i) {
        const LayerSpec& l = m.layers[i];
        const Tensor& x = trace.acts[i];
        switch (l.kind) {
            case LayerKind::dense: grad = dense_bwd_input(grad, m.weights[i]); break;
            case LayerKind::conv2d:
                grad = conv_bwd_input(grad, m.weights[i], x.shape, l.stride);
                break;
            case LayerKind::relu: grad = relu_bwd(x, grad); break;
            case LayerKind::flatten: grad = Tensor(x.shape, grad.data); break;
        }
    }
    return grad;
}

Tensor input_gradient(const Model& m, const Tensor& x, int j) {
    if (j < 0 || j >= m.class_count)
        throw ShapeError("class index " + std::to_string(j) + " out of range [0," +
                         std::to_string(m.class_count) + ")");
    Tensor batch = x.shape.size() == m.input_shape.size() ? as_batch_of_one(x) : x;
    if (batch.shape[0] != 1) throw ShapeError("input_gradient expects a single sample");
    ForwardTrace trace;
    forward(m, batch, trace);
    Tensor seed({1, m.class_count});
    seed.data[static_cast<size_t>(j)] = 1.0f;
    Tensor g = backprop_input(m, trace, seed);
    check_finite(g, "input gradient");
    return Tensor(m.input_shape, g.data);
}

std::vector<Tensor> logit_gradients(const Model& m, const Tensor& x, std::vector<double>& logits) {
    Tensor batch = x.shape.size() == m.input_shape.size() ? as_batch_of_one(x) : x;
    if (batch.shape[0] != 1) throw ShapeError("logit_gradients expects a single sample");
    ForwardTrace trace;
    Tensor out = forward(m, batch, trace);
    logits.assign(out.data.begin(), out.data.end());
    std::vector<Tensor> grads;
    grads.reserve(m.class_count);
    for (int j = 0; j < m.class_count; ++j) {
        Tensor seed({1, m.class_count});
        seed.data[static_cast<size_t>(j)] = 1.0f;
        Tensor g = backprop_input(m, trace, seed);
        grads.push_back(Tensor(m.input_shape, g.data));
    }
    return grads;
}

ParamGrads backward_params(const Model& m, const ForwardTrace& trace, const Tensor& logits_grad) {
    ParamGrads pg;
    pg.weights.resize(m.layers.size());
    pg.biases.resize(m.layers.size());
    Tensor grad = logits_grad;
    for (int i = static_cast<int>(m.layers.size()) - 1; i >= 0; --i) {
        const LayerSpec& l = m.layers[i];
        const Tensor& x = trace.acts[i];
        switch (l.kind) {
            case LayerKind::dense: {
                pg.weights[i] = Tensor(m.weights[i].shape);
                pg.biases[i] = Tensor(m.biases[i].shape);
                dense_bwd_params(x, grad, pg.weights[i], pg.biases[i]);
                if (i > 0) grad = dense_bwd_input(grad, m.weights[i]);
                break;
            }
            case LayerKind::conv2d: {
                pg.weights[i] = Tensor(m.weights[i].shape);
                pg.biases[i] = Tensor(m.biases[i].shape);
                conv_bwd_params(x, grad, l.stride, pg.weights[i], pg.biases[i]);
                if (i > 0) grad = conv_bwd_input(grad, m.weights[i], x.shape, l.stride);
                break;
            }
            case LayerKind::relu: grad = relu_bwd(x, grad); break;
            case LayerKind::flatten: grad = Tensor(x.shape, grad.data); break;
        }
    }
    return pg;
}

}  // namespace trojanscope::nn
