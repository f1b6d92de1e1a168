#pragma once

#include <cassert>
#include <cstddef>
#include <string>
#include <vector>

namespace phenonet {

// Dense row-major tensor over f32 or f64. Storage is always contiguous;
// there are no views or strides. Values are expected to stay finite after
// every operation; use ensure_finite() at checkpoints where that matters.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_)) {}

    Tensor(std::vector<std::size_t> shape, std::vector<T> values);

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::size_t> shape, T value);

    std::size_t ndim() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const {
        assert(i < shape_.size());
        return shape_[i];
    }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& raw() { return data_; }
    const std::vector<T>& raw() const { return data_; }

    T& operator[](std::size_t i) {
        assert(i < data_.size());
        return data_[i];
    }
    T operator[](std::size_t i) const {
        assert(i < data_.size());
        return data_[i];
    }
    T& operator()(std::size_t i, std::size_t j) {
        assert(ndim() == 2 && i < shape_[0] && j < shape_[1]);
        return data_[i * shape_[1] + j];
    }
    T operator()(std::size_t i, std::size_t j) const {
        assert(ndim() == 2 && i < shape_[0] && j < shape_[1]);
        return data_[i * shape_[1] + j];
    }
    T& operator()(std::size_t i, std::size_t j, std::size_t k) {
        assert(ndim() == 3 && i < shape_[0] && j < shape_[1] && k < shape_[2]);
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    T operator()(std::size_t i, std::size_t j, std::size_t k) const {
        assert(ndim() == 3 && i < shape_[0] && j < shape_[1] && k < shape_[2]);
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    void fill(T value);
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    std::string shape_str() const;

private:
    static std::size_t count(const std::vector<std::size_t>& shape);

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

std::string shape_str(const std::vector<std::size_t>& shape);

// c = a @ b for 2-d tensors; throws DimensionError with both shapes on mismatch.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Accumulating variants used by backward passes.
template <typename T>
void matmul_acc(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c);  // c += a @ b
template <typename T>
void matmul_tn_acc(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c);  // c += a^T @ b
template <typename T>
void matmul_nt_acc(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c);  // c += a @ b^T

enum class Act { sigmoid, tanh, relu, none };

// Numerically safe scalar sigmoid: saturates cleanly, never NaN for finite x.
template <typename T>
T sigmoid_scalar(T x);

template <typename T>
T apply_act(T x, Act kind);

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Act kind);

// Throws NumericError naming `context` if any element is NaN or infinite.
template <typename T>
void ensure_finite(const Tensor<T>& x, const char* context);

}  // namespace phenonet
