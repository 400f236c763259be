#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trojanscope/tensor.hpp"

namespace trojanscope::nn {

enum class LayerKind { dense, conv2d, relu, flatten };

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    // dense
    int in_features = 0;
    int out_features = 0;
    // conv2d (valid padding)
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 0;
    int stride = 1;

    static LayerSpec dense(int in, int out) {
        LayerSpec s;
        s.kind = LayerKind::dense;
        s.in_features = in;
        s.out_features = out;
        return s;
    }
    static LayerSpec conv2d(int in_ch, int out_ch, int kernel, int stride = 1) {
        LayerSpec s;
        s.kind = LayerKind::conv2d;
        s.in_channels = in_ch;
        s.out_channels = out_ch;
        s.kernel = kernel;
        s.stride = stride;
        return s;
    }
    static LayerSpec relu() {
        LayerSpec s;
        s.kind = LayerKind::relu;
        return s;
    }
    static LayerSpec flatten() {
        LayerSpec s;
        s.kind = LayerKind::flatten;
        return s;
    }

    bool has_params() const { return kind == LayerKind::dense || kind == LayerKind::conv2d; }
};

// Ordered layer stack with trained weights. Immutable once trained; forward
// and gradient calls never mutate it, so a shared const Model is safe to use
// from many threads.
struct Model {
    std::string arch_id;
    int class_count = 0;
    std::vector<int> input_shape;  // {channels, height, width}
    std::vector<LayerSpec> layers;
    std::vector<Tensor> weights;  // one slot per layer; empty tensor for relu/flatten
    std::vector<Tensor> biases;
    uint64_t seed = 0;
    int trained_epochs = 0;
    std::vector<double> epoch_loss;
};

// Per-layer output shapes (without the batch dim). Throws ShapeError if
// consecutive layers do not compose or the final output != class_count.
std::vector<std::vector<int>> infer_shapes(const Model& m);

// Desk-scale archetypes: "mlp-2", "cnn-s", "cnn-m".
Model make_model(const std::string& arch_id, const std::vector<int>& input_shape, int class_count);

// Glorot-uniform init, deterministic given seed. Overwrites existing params.
void init_params(Model& m, uint64_t seed);

// Activations captured during forward, needed for the backward pass.
// acts[0] is the input batch, acts[i+1] the output of layer i.
struct ForwardTrace {
    std::vector<Tensor> acts;
};

Tensor forward(const Model& m, const Tensor& batch);
Tensor forward(const Model& m, const Tensor& batch, ForwardTrace& trace);

std::vector<int> predict(const Model& m, const Tensor& batch);
int predict_one(const Model& m, const Tensor& x);

// Exact reverse-mode gradient of logit j w.r.t. a single input sample.
Tensor input_gradient(const Model& m, const Tensor& x, int j);

// Gradients of all class logits at once (c backward passes sharing one
// forward trace). Returns per-class gradients and fills logits.
std::vector<Tensor> logit_gradients(const Model& m, const Tensor& x, std::vector<double>& logits);

// Parameter gradients for a batch under an upstream logits gradient
// [n, class_count]. Used by the trainer and by gradient tests.
struct ParamGrads {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;
};
ParamGrads backward_params(const Model& m, const ForwardTrace& trace, const Tensor& logits_grad);

}  // namespace trojanscope::nn
