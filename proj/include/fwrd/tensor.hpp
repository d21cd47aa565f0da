// Dense rank-4 tensor used by every stage of the pipeline.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fwrd {

/// (batch, channels, height, width)
struct Shape {
    std::size_t n = 1, c = 1, h = 1, w = 1;

    constexpr std::size_t numel() const { return n * c * h * w; }
    constexpr std::size_t plane() const { return h * w; }
    constexpr bool operator==(const Shape&) const = default;

    std::string str() const {
        std::ostringstream os;
        os << "(" << n << "," << c << "," << h << "," << w << ")";
        return os.str();
    }
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape s, T fill = T(0)) : shape_(s), data_(s.numel(), fill) { validate(); }
    Tensor(Shape s, std::vector<T> values) : shape_(s), data_(std::move(values)) {
        validate();
        if (data_.size() != shape_.numel())
            throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                             " does not match shape " + shape_.str());
    }

    const Shape& shape() const { return shape_; }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> span() { return data_; }
    std::span<const T> span() const { return data_; }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
    }
    const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
    }

    /// Pointer to the (n, c) plane.
    T* plane(std::size_t n, std::size_t c) { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
    const T* plane(std::size_t n, std::size_t c) const {
        return data_.data() + (n * shape_.c + c) * shape_.plane();
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor reshaped(Shape s) const {
        if (s.numel() != numel())
            throw ShapeError("cannot reshape " + shape_.str() + " to " + s.str());
        return Tensor(s, data_);
    }

    template <class U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    T sum() const { return std::accumulate(data_.begin(), data_.end(), T(0)); }

    Tensor& operator+=(const Tensor& o) {
        require_same(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    void require_same(const Tensor& o, const char* what) const {
        if (!(shape_ == o.shape_))
            throw ShapeError(std::string(what) + ": shape mismatch " + shape_.str() + " vs " +
                             o.shape_.str());
    }

private:
    void validate() const {
        if (shape_.n == 0 || shape_.c == 0 || shape_.h == 0 || shape_.w == 0)
            throw ShapeError("tensor dimensions must be >= 1, got " + shape_.str());
    }

    Shape shape_{};
    std::vector<T> data_;
};

/// Copies batch items [begin, begin+count) into a new tensor.
template <class T>
Tensor<T> slice_batch(const Tensor<T>& t, std::size_t begin, std::size_t count) {
    const Shape s = t.shape();
    if (begin + count > s.n) throw ShapeError("slice_batch out of range for " + s.str());
    const std::size_t item = s.c * s.h * s.w;
    std::vector<T> out(t.data() + begin * item, t.data() + (begin + count) * item);
    return Tensor<T>({count, s.c, s.h, s.w}, std::move(out));
}

}  // namespace fwrd
