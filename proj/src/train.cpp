#include "trojanscope/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trojanscope/rng.hpp"

namespace trojanscope::nn {

double cross_entropy(const Tensor& logits, const std::vector<int>& labels, Tensor* grad_out) {
    const int n = logits.shape[0], c = logits.shape[1];
    if (static_cast<int>(labels.size()) != n)
        throw ShapeError("labels size does not match batch");
    if (grad_out) *grad_out = Tensor({n, c});
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const float* li = &logits.data[static_cast<size_t>(i) * c];
        const int y = labels[i];
        if (y < 0 || y >= c) throw SpecError("label " + std::to_string(y) + " out of range");
        double mx = li[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(li[j]));
        double sum = 0.0;
        for (int j = 0; j < c; ++j) sum += std::exp(static_cast<double>(li[j]) - mx);
        const double lse = mx + std::log(sum);
        total += lse - li[y];
        if (grad_out) {
            float* gi = &grad_out->data[static_cast<size_t>(i) * c];
            for (int j = 0; j < c; ++j) {
                double p = std::exp(static_cast<double>(li[j]) - lse);
                gi[j] = static_cast<float>((p - (j == y ? 1.0 : 0.0)) / n);
            }
        }
    }
    return total / n;
}

static Tensor gather_batch(const Tensor& images, const std::vector<int>& order, int begin,
                           int end) {
    std::vector<int> s = images.shape;
    s[0] = end - begin;
    Tensor out(s);
    const size_t per = out.numel() / static_cast<size_t>(s[0]);
    for (int i = begin; i < end; ++i)
        std::copy_n(&images.data[per * order[i]], per, &out.data[per * (i - begin)]);
    return out;
}

Model train(Model model, const data::LabeledSet& dataset, const TrainConfig& cfg) {
    const int n = dataset.size();
    if (n == 0) throw SpecError("training dataset is empty");
    for (int y : dataset.labels)
        if (y < 0 || y >= model.class_count)
            throw SpecError("label " + std::to_string(y) + " out of range [0," +
                            std::to_string(model.class_count) + ")");
    if (cfg.epochs < 1) throw SpecError("epochs must be >= 1");
    if (cfg.batch_size < 1) throw SpecError("batch_size must be >= 1");
    if (cfg.learning_rate < 0) throw SpecError("learning_rate must be non-negative");
    if (cfg.momentum < 0 || cfg.momentum >= 1) throw SpecError("momentum must be in [0,1)");

    bool has_params = false;
    for (size_t i = 0; i < model.layers.size(); ++i)
        if (model.layers[i].has_params() && i < model.weights.size() &&
            model.weights[i].numel() > 0)
            has_params = true;
    if (!has_params) init_params(model, cfg.seed);

    // momentum buffers
    std::vector<Tensor> vel_w(model.layers.size()), vel_b(model.layers.size());
    for (size_t i = 0; i < model.layers.size(); ++i) {
        if (!model.layers[i].has_params()) continue;
        vel_w[i] = Tensor(model.weights[i].shape);
        vel_b[i] = Tensor(model.biases[i].shape);
    }

    const int decay_every = (cfg.epochs + 2) / 3;  // ceil(epochs/3)
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    model.epoch_loss.clear();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.learning_rate * std::pow(0.5, epoch / decay_every);
        Rng shuffle_rng(Rng::derive(cfg.seed, streams::kShuffle, static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double epoch_total = 0.0;
        int batches = 0;
        for (int begin = 0; begin < n; begin += cfg.batch_size) {
            const int end = std::min(n, begin + cfg.batch_size);
            Tensor xb = gather_batch(dataset.images, order, begin, end);
            std::vector<int> yb(end - begin);
            for (int i = begin; i < end; ++i) yb[i - begin] = dataset.labels[order[i]];

            ForwardTrace trace;
            Tensor logits = forward(model, xb, trace);
            Tensor lgrad;
            epoch_total += cross_entropy(logits, yb, &lgrad);
            ++batches;
            ParamGrads pg = backward_params(model, trace, lgrad);

            for (size_t i = 0; i < model.layers.size(); ++i) {
                if (!model.layers[i].has_params()) continue;
                for (size_t k = 0; k < vel_w[i].data.size(); ++k) {
                    vel_w[i].data[k] = static_cast<float>(cfg.momentum * vel_w[i].data[k] -
                                                          lr * pg.weights[i].data[k]);
                    model.weights[i].data[k] += vel_w[i].data[k];
                }
                for (size_t k = 0; k < vel_b[i].data.size(); ++k) {
                    vel_b[i].data[k] = static_cast<float>(cfg.momentum * vel_b[i].data[k] -
                                                          lr * pg.biases[i].data[k]);
                    model.biases[i].data[k] += vel_b[i].data[k];
                }
            }
        }
        model.epoch_loss.push_back(epoch_total / batches);
    }
    model.trained_epochs += cfg.epochs;

    for (size_t i = 0; i < model.layers.size(); ++i)
        if (model.layers[i].has_params()) check_finite(model.weights[i], "trained weights");
    return model;
}

double accuracy(const Model& m, const data::LabeledSet& set) {
    if (set.size() == 0) throw SpecError("accuracy on empty set");
    std::vector<int> pred = predict(m, set.images);
    int correct = 0;
    for (int i = 0; i < set.size(); ++i)
        if (pred[i] == set.labels[i]) ++correct;
    return static_cast<double>(correct) / set.size();
}

}  // namespace trojanscope::nn
