#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vaesynth/errors.hpp"

namespace vaesynth::numcore {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major array with an optional gradient buffer of the same shape.
template <typename T>
class Tensor {
   public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
        check_extents(shape_);
        data_.assign(shape_numel(shape_), fill);
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_extents(shape_);
        if (shape_numel(shape_) != data_.size()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
        }
    }

    static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& vec() noexcept { return data_; }
    const std::vector<T>& vec() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T item() const {
        if (data_.size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape_));
        return data_[0];
    }

    bool has_grad() const noexcept { return grad_.has_value(); }
    std::span<T> grad() {
        if (!grad_) throw ValidationError("tensor has no gradient buffer");
        return *grad_;
    }
    std::span<const T> grad() const {
        if (!grad_) throw ValidationError("tensor has no gradient buffer");
        return *grad_;
    }
    void zero_grad() { grad_.emplace(data_.size(), T{0}); }
    void drop_grad() { grad_.reset(); }

    /// Reinterprets the buffer under a new shape with the same element count.
    Tensor reshaped(Shape shape) const {
        if (shape_numel(shape) != data_.size()) {
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        }
        return Tensor(std::move(shape), data_);
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    template <typename U>
    Tensor<U> cast() const {
        return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

   private:
    static void check_extents(const Shape& shape) {
        if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
        for (auto e : shape) {
            if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
        }
    }

    Shape shape_;
    std::vector<T> data_;
    std::optional<std::vector<T>> grad_;
};

}  // namespace vaesynth::numcore
