#pragma once

#include <cstdint>

#include "trojanscope/dataset.hpp"
#include "trojanscope/model.hpp"

namespace trojanscope::nn {

struct TrainConfig {
    int epochs = 12;
    int batch_size = 32;
    double learning_rate = 0.05;
    double momentum = 0.9;
    uint64_t seed = 1;
};

// Mean softmax cross-entropy over the batch; stable for logits up to 1e4.
// If grad_out is non-null it receives d(mean loss)/d(logits), shape [n, c].
double cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                     Tensor* grad_out = nullptr);

// SGD with momentum and step decay (x0.5 every ceil(epochs/3) epochs).
// Initializes params from cfg.seed when the model is untrained; shuffle
// order is seeded, so a run reproduces bit-for-bit.
Model train(Model model, const data::LabeledSet& dataset, const TrainConfig& cfg);

// Fraction of samples predicted correctly.
double accuracy(const Model& m, const data::LabeledSet& set);

}  // namespace trojanscope::nn
