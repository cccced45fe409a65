#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace transnar {

using Shape = std::vector<long>;

inline long shape_numel(const Shape& s) {
    long n = 1;
    for (long d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

/// Dense row-major tensor. Plain value type: copying copies the buffer.
template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), T(0)) {}
    Tensor(Shape s, T fill) : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), fill) {}

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, T v) { return Tensor(std::move(s), v); }
    static Tensor scalar(T v) {
        Tensor t(Shape{1});
        t.data[0] = v;
        return t;
    }
    static Tensor from(Shape s, std::vector<T> vals) {
        Tensor t;
        t.shape = std::move(s);
        if (shape_numel(t.shape) != static_cast<long>(vals.size()))
            throw std::invalid_argument("Tensor::from: size mismatch " + shape_str(t.shape));
        t.data = std::move(vals);
        return t;
    }

    long numel() const { return static_cast<long>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    long dim(int i) const { return shape[static_cast<size_t>(i)]; }
    bool empty() const { return data.empty(); }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& at(long i) { return data[static_cast<size_t>(i)]; }
    const T& at(long i) const { return data[static_cast<size_t>(i)]; }
    T& at(long i, long j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
    const T& at(long i, long j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
    T& at(long i, long j, long k) { return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)]; }
    const T& at(long i, long j, long k) const {
        return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }
    T& at(long i, long j, long k, long l) {
        return data[static_cast<size_t>(((i * shape[1] + j) * shape[2] + k) * shape[3] + l)];
    }
    const T& at(long i, long j, long k, long l) const {
        return data[static_cast<size_t>(((i * shape[1] + j) * shape[2] + k) * shape[3] + l)];
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != numel())
            throw std::invalid_argument("reshape: numel mismatch " + shape_str(shape) + " -> " + shape_str(s));
        Tensor t = *this;
        t.shape = std::move(s);
        return t;
    }

    /// Rows = product of all dims but the last; used by per-row kernels.
    long rows() const { return shape.empty() ? 0 : numel() / shape.back(); }
    long cols() const { return shape.empty() ? 0 : shape.back(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (const T& v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> t;
        t.shape = shape;
        t.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) t.data[i] = static_cast<U>(data[i]);
        return t;
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace transnar
