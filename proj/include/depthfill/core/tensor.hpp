#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "depthfill/core/errors.hpp"

namespace depthfill {

// Dense row-major tensor, the unit of data everywhere in the toolkit.
// Rasters are [H,W] / [C,H,W]; network activations are [B,C,H,W].
template <class T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(count(shape_), T{});
    }

    Tensor(std::vector<int> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_)) {
            throw ShapeError("tensor data size does not match shape " + shape_string());
        }
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, T v) {
        Tensor t(std::move(shape));
        t.fill(v);
        return t;
    }

    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    const std::vector<int>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(int a, int b) { return data_[static_cast<std::size_t>(a) * dim(1) + b]; }
    const T& at(int a, int b) const { return data_[static_cast<std::size_t>(a) * dim(1) + b]; }

    T& at(int a, int b, int c) {
        return data_[(static_cast<std::size_t>(a) * dim(1) + b) * dim(2) + c];
    }
    const T& at(int a, int b, int c) const {
        return data_[(static_cast<std::size_t>(a) * dim(1) + b) * dim(2) + c];
    }

    T& at(int a, int b, int c, int d) {
        return data_[((static_cast<std::size_t>(a) * dim(1) + b) * dim(2) + c) *
                         static_cast<std::size_t>(dim(3)) +
                     d];
    }
    const T& at(int a, int b, int c, int d) const {
        return data_[((static_cast<std::size_t>(a) * dim(1) + b) * dim(2) + c) *
                         static_cast<std::size_t>(dim(3)) +
                     d];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

    std::string shape_string() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) os << ',';
            os << shape_[i];
        }
        os << ']';
        return os.str();
    }

    static std::size_t count(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) {
            if (d < 0) throw ShapeError("negative tensor dimension");
            n *= static_cast<std::size_t>(d);
        }
        return shape.empty() ? 0 : n;
    }

private:
    std::vector<int> shape_;
    std::vector<T> data_;
};

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
    }
}

}  // namespace depthfill
