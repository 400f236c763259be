#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "trojanscope/common.hpp"

namespace trojanscope {

// Dense n-dimensional array of 32-bit floats, row-major. Carries images
// [n, c, h, w], logits [n, classes] and gradients.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape), 0.0f) {}
    Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
        if (count(shape) != data.size())
            throw ShapeError("tensor data length does not match shape");
    }

    static size_t count(const std::vector<int>& s) {
        size_t n = 1;
        for (int d : s) {
            if (d <= 0) throw ShapeError("tensor dims must be positive");
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    size_t numel() const { return data.size(); }

    float& operator[](size_t i) { return data[i]; }
    float operator[](size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double l2_norm() const {
        double s = 0.0;
        for (float v : data) s += static_cast<double>(v) * v;
        return std::sqrt(s);
    }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

inline void check_finite(const Tensor& t, const char* what) {
    if (!t.all_finite()) throw NumericError(std::string("non-finite values in ") + what);
}

// x + alpha * y, elementwise.
inline Tensor axpy(const Tensor& x, double alpha, const Tensor& y) {
    if (!x.same_shape(y)) throw ShapeError("axpy shape mismatch " + x.shape_str() + " vs " + y.shape_str());
    Tensor out = x;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = static_cast<float>(x.data[i] + alpha * y.data[i]);
    return out;
}

inline double dot(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("dot shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        s += static_cast<double>(a.data[i]) * b.data[i];
    return s;
}

// Extracts sample i of a batched tensor [n, ...] as its own tensor [...].
inline Tensor slice_sample(const Tensor& batch, int i) {
    if (batch.shape.size() < 2) throw ShapeError("slice_sample needs a batched tensor");
    std::vector<int> s(batch.shape.begin() + 1, batch.shape.end());
    size_t per = Tensor::count(s);
    Tensor out(s);
    std::copy(batch.data.begin() + static_cast<ptrdiff_t>(per) * i,
              batch.data.begin() + static_cast<ptrdiff_t>(per) * (i + 1), out.data.begin());
    return out;
}

// Stacks a single sample into a batch of one: shape [...] -> [1, ...].
inline Tensor as_batch_of_one(const Tensor& x) {
    std::vector<int> s;
    s.reserve(x.shape.size() + 1);
    s.push_back(1);
    s.insert(s.end(), x.shape.begin(), x.shape.end());
    return Tensor(s, x.data);
}

}  // namespace trojanscope
