#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "prograde/common.hpp"
#include "prograde/rng.hpp"

namespace prograde {

/// Dense shape, rank 1..4. Image tensors are (batch, channels, height, width).
struct Shape {
    std::array<int, 4> dim{1, 1, 1, 1};
    int rank = 0;

    Shape() = default;
    Shape(std::initializer_list<int> dims) {
        check(dims.size() >= 1 && dims.size() <= 4, "shape: rank must be 1..4");
        rank = static_cast<int>(dims.size());
        int i = 0;
        for (int d : dims) {
            check(d >= 0, "shape: negative extent");
            dim[i++] = d;
        }
        for (; i < 4; ++i) dim[i] = 1;
    }

    static Shape of(const std::vector<int>& dims) {
        Shape s;
        check(dims.size() >= 1 && dims.size() <= 4, "shape: rank must be 1..4");
        s.rank = static_cast<int>(dims.size());
        for (int i = 0; i < s.rank; ++i) s.dim[i] = dims[i];
        return s;
    }

    int operator[](int i) const { return dim[i]; }

    std::int64_t numel() const {
        std::int64_t n = 1;
        for (int i = 0; i < rank; ++i) n *= dim[i];
        return n;
    }

    bool operator==(const Shape& o) const {
        if (rank != o.rank) return false;
        for (int i = 0; i < rank; ++i)
            if (dim[i] != o.dim[i]) return false;
        return true;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        std::ostringstream os;
        os << "(";
        for (int i = 0; i < rank; ++i) os << dim[i] << (i + 1 < rank ? "," : "");
        os << ")";
        return os.str();
    }
};

/// Computes the NumPy-style broadcast of two shapes (trailing alignment,
/// extent 1 stretches). Throws when incompatible.
inline Shape broadcast_shapes(const Shape& a, const Shape& b) {
    Shape out;
    out.rank = std::max(a.rank, b.rank);
    for (int i = 0; i < out.rank; ++i) {
        int ai = a.rank - 1 - i >= 0 ? a.dim[a.rank - 1 - i] : 1;
        int bi = b.rank - 1 - i >= 0 ? b.dim[b.rank - 1 - i] : 1;
        check(ai == bi || ai == 1 || bi == 1,
              "broadcast: incompatible shapes " + a.str() + " vs " + b.str());
        out.dim[out.rank - 1 - i] = std::max(ai, bi);
    }
    return out;
}

/// Dense tensor with value semantics and shared immutable storage. All ops
/// allocate fresh outputs; nothing mutates a tensor once it is handed out.
template <typename T>
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape s) { return Tensor(s, T(0)); }

    static Tensor full(Shape s, T v) { return Tensor(s, v); }

    static Tensor from(Shape s, std::vector<T> values) {
        check(static_cast<std::int64_t>(values.size()) == s.numel(),
              "tensor: data length " + std::to_string(values.size()) + " does not match shape " + s.str());
        Tensor t;
        t.shape_ = s;
        t.data_ = std::make_shared<std::vector<T>>(std::move(values));
        return t;
    }

    static Tensor normal(Shape s, Rng& rng) {
        Tensor t(s, T(0));
        for (auto& v : t.raw()) v = static_cast<T>(rng.normal());
        return t;
    }

    static Tensor uninitialized(Shape s) { return Tensor(s, T(0)); }

    const Shape& shape() const { return shape_; }
    std::int64_t numel() const { return shape_.numel(); }
    bool empty() const { return !data_; }

    const T* data() const { return data_->data(); }
    T* mutable_data() { return data_->data(); }
    const std::vector<T>& values() const { return *data_; }
    std::vector<T>& raw() { return *data_; }

    T scalar() const {
        check(numel() == 1, "tensor: scalar() on shape " + shape_.str());
        return (*data_)[0];
    }

    T at(int i) const { return (*data_)[i]; }
    T at(int a, int b) const { return (*data_)[static_cast<std::int64_t>(a) * shape_.dim[1] + b]; }
    /// Rank-3 accessor (channel, row, column).
    T at(int c, int y, int x) const {
        return (*data_)[(static_cast<std::int64_t>(c) * shape_.dim[1] + y) * shape_.dim[2] + x];
    }
    T at(int a, int b, int c, int d) const {
        std::int64_t idx = ((static_cast<std::int64_t>(a) * shape_.dim[1] + b) * shape_.dim[2] + c) * shape_.dim[3] + d;
        return (*data_)[idx];
    }

    /// Deep copy into fresh storage.
    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.data_ = std::make_shared<std::vector<T>>(*data_);
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> v(data_->size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<U>((*data_)[i]);
        return Tensor<U>::from(shape_, std::move(v));
    }

    bool all_finite() const {
        for (const T& v : *data_)
            if (!is_finite_value(v)) return false;
        return true;
    }

    bool bit_equal(const Tensor& o) const {
        return shape_ == o.shape_ && *data_ == *o.data_;
    }

  private:
    Tensor(Shape s, T fill) : shape_(s), data_(std::make_shared<std::vector<T>>(s.numel(), fill)) {}

    Shape shape_;
    std::shared_ptr<std::vector<T>> data_;
};

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    check(a.shape() == b.shape(), "max_abs_diff: shape mismatch");
    double m = 0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i])));
    return m;
}

}  // namespace prograde
