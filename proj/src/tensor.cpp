#include "octseg/tensor.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

namespace octseg {

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    int64_t n = 1;
    for (int d : shape_) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str());
        n *= d;
    }
    data_.assign(static_cast<size_t>(n), 0.0f);
}

Tensor Tensor::full(std::vector<int> shape, float value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

float& Tensor::at(int n, int h, int w, int c) {
    return data_[((static_cast<size_t>(n) * shape_[1] + h) * shape_[2] + w) * shape_[3] + c];
}
float Tensor::at(int n, int h, int w, int c) const {
    return data_[((static_cast<size_t>(n) * shape_[1] + h) * shape_[2] + w) * shape_[3] + c];
}
float& Tensor::at(int h, int w, int c) {
    return data_[(static_cast<size_t>(h) * shape_[1] + w) * shape_[2] + c];
}
float Tensor::at(int h, int w, int c) const {
    return data_[(static_cast<size_t>(h) * shape_[1] + w) * shape_[2] + c];
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor::shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < shape_.size(); ++i) {
        s += std::to_string(shape_[i]);
        if (i + 1 < shape_.size()) s += ", ";
    }
    return s + ")";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

std::string to_hex(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace octseg
