#include "phenonet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "phenonet/errors.hpp"

namespace phenonet {

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

template <typename T>
std::size_t Tensor<T>::count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

template <typename T>
Tensor<T>::Tensor(std::vector<std::size_t> shape, std::vector<T> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (count(shape_) != data_.size()) {
        throw DimensionError("tensor shape " + phenonet::shape_str(shape_) + " does not match " +
                             std::to_string(data_.size()) + " values");
    }
}

template <typename T>
Tensor<T> Tensor<T>::full(std::vector<std::size_t> shape, T value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

template <typename T>
void Tensor<T>::fill(T value) {
    std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool Tensor<T>::all_finite() const {
    for (T v : data_) {
        if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
}

template <typename T>
std::string Tensor<T>::shape_str() const {
    return phenonet::shape_str(shape_);
}

namespace {

template <typename T>
void check_matmul_2d(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.ndim() != 2 || b.ndim() != 2) {
        throw DimensionError(std::string(op) + " requires 2-d tensors, got " + a.shape_str() +
                             " and " + b.shape_str());
    }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    check_matmul_2d(a, b, "matmul");
    if (a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul inner dimensions disagree: " + a.shape_str() + " x " +
                             b.shape_str());
    }
    Tensor<T> c({a.dim(0), b.dim(1)});
    matmul_acc(a, b, c);
    return c;
}

template <typename T>
void matmul_acc(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
    check_matmul_2d(a, b, "matmul_acc");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k || c.ndim() != 2 || c.dim(0) != m || c.dim(1) != n) {
        throw DimensionError("matmul_acc shapes disagree: " + a.shape_str() + " x " +
                             b.shape_str() + " -> " + c.shape_str());
    }
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T aik = pa[i * k + kk];
            if (aik == T(0)) continue;
            const T* brow = pb + kk * n;
            T* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

template <typename T>
void matmul_tn_acc(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
    check_matmul_2d(a, b, "matmul_tn_acc");
    const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k || c.ndim() != 2 || c.dim(0) != m || c.dim(1) != n) {
        throw DimensionError("matmul_tn_acc shapes disagree: " + a.shape_str() + "^T x " +
                             b.shape_str() + " -> " + c.shape_str());
    }
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
    for (std::size_t kk = 0; kk < k; ++kk) {
        const T* arow = pa + kk * m;
        const T* brow = pb + kk * n;
        for (std::size_t i = 0; i < m; ++i) {
            const T aki = arow[i];
            if (aki == T(0)) continue;
            T* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
        }
    }
}

template <typename T>
void matmul_nt_acc(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>& c) {
    check_matmul_2d(a, b, "matmul_nt_acc");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (b.dim(1) != k || c.ndim() != 2 || c.dim(0) != m || c.dim(1) != n) {
        throw DimensionError("matmul_nt_acc shapes disagree: " + a.shape_str() + " x " +
                             b.shape_str() + "^T -> " + c.shape_str());
    }
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = pa + i * k;
        T* crow = pc + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const T* brow = pb + j * k;
            T acc = T(0);
            for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            crow[j] += acc;
        }
    }
}

template <typename T>
T sigmoid_scalar(T x) {
    if (x >= T(0)) {
        return T(1) / (T(1) + std::exp(-x));
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
T apply_act(T x, Act kind) {
    switch (kind) {
        case Act::sigmoid: return sigmoid_scalar(x);
        case Act::tanh: return std::tanh(x);
        case Act::relu: return x > T(0) ? x : T(0);
        case Act::none: return x;
    }
    return x;
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Act kind) {
    Tensor<T> y(x.shape());
    const T* px = x.data();
    T* py = y.data();
    for (std::size_t i = 0; i < x.numel(); ++i) py[i] = apply_act(px[i], kind);
    return y;
}

template <typename T>
void ensure_finite(const Tensor<T>& x, const char* context) {
    if (!x.all_finite()) {
        throw NumericError(std::string("non-finite values in ") + context);
    }
}

template class Tensor<float>;
template class Tensor<double>;

template Tensor<float> matmul(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> matmul(const Tensor<double>&, const Tensor<double>&);
template void matmul_acc(const Tensor<float>&, const Tensor<float>&, Tensor<float>&);
template void matmul_acc(const Tensor<double>&, const Tensor<double>&, Tensor<double>&);
template void matmul_tn_acc(const Tensor<float>&, const Tensor<float>&, Tensor<float>&);
template void matmul_tn_acc(const Tensor<double>&, const Tensor<double>&, Tensor<double>&);
template void matmul_nt_acc(const Tensor<float>&, const Tensor<float>&, Tensor<float>&);
template void matmul_nt_acc(const Tensor<double>&, const Tensor<double>&, Tensor<double>&);
template float sigmoid_scalar(float);
template double sigmoid_scalar(double);
template float apply_act(float, Act);
template double apply_act(double, Act);
template Tensor<float> activation(const Tensor<float>&, Act);
template Tensor<double> activation(const Tensor<double>&, Act);
template void ensure_finite(const Tensor<float>&, const char*);
template void ensure_finite(const Tensor<double>&, const char*);

}  // namespace phenonet
