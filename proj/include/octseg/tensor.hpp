#ifndef OCTSEG_TENSOR_HPP
#define OCTSEG_TENSOR_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "octseg/common.hpp"

namespace octseg {

// Dense float32 tensor, row-major. 4-D activations use NHWC layout.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, float value);

    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    const std::vector<int>& shape() const { return shape_; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // NHWC accessors; convenience only, hot paths index manually.
    float& at(int n, int h, int w, int c);
    float at(int n, int h, int w, int c) const;
    float& at(int h, int w, int c);
    float at(int h, int w, int c) const;

    void fill(float v);
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    std::string shape_str() const;

private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

// Throws ShapeError naming `what` if the two tensors differ in shape.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace octseg

#endif
