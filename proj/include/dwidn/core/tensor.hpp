#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <new>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "dwidn/core/error.hpp"

namespace dwidn {

using Shape = std::vector<std::size_t>;

/// 64-byte aligned allocation. Vectorized kernels peel differently depending
/// on where a buffer starts, so fixed alignment keeps floating-point results
/// independent of heap state.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept
    {
    }

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept
    {
        return true;
    }
};

template <class T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

inline std::size_t shape_volume(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i)
        os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

template <class T>
struct is_complex : std::false_type {};
template <class T>
struct is_complex<std::complex<T>> : std::true_type {};

template <class T>
bool is_finite_value(const T& v)
{
    if constexpr (is_complex<T>::value)
        return std::isfinite(v.real()) && std::isfinite(v.imag());
    else if constexpr (std::is_floating_point_v<T>)
        return std::isfinite(v);
    else
        return true;
}

/// Dense row-major N-dimensional array. Network data uses NCHW layout,
/// images use [H, W].
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T{})
        : shape_(std::move(shape)), data_(shape_volume(shape_), fill)
    {
    }

    Tensor(Shape shape, const std::vector<T>& data) : Tensor(std::move(shape), AlignedVector<T>(data.begin(), data.end()))
    {
    }

    Tensor(Shape shape, AlignedVector<T> data) : shape_(std::move(shape)), data_(std::move(data))
    {
        if (shape_volume(shape_) != data_.size())
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    AlignedVector<T>& storage() noexcept { return data_; }
    const AlignedVector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& at(std::size_t r, std::size_t c) noexcept { return data_[r * shape_[1] + c]; }
    const T& at(std::size_t r, std::size_t c) const noexcept { return data_[r * shape_[1] + c]; }

    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept
    {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept
    {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor reshaped(Shape shape) const&
    {
        return Tensor(std::move(shape), data_);
    }
    Tensor reshaped(Shape shape) &&
    {
        return Tensor(std::move(shape), std::move(data_));
    }

    bool all_finite() const
    {
        return std::all_of(data_.begin(), data_.end(), [](const T& v) { return is_finite_value(v); });
    }

    template <class U>
    Tensor<U> cast() const
    {
        AlignedVector<U> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(), [](const T& v) { return static_cast<U>(v); });
        return Tensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const Tensor& a, const Tensor& b)
    {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    AlignedVector<T> data_;
};

template <class T, class U>
void require_same_shape(const Tensor<T>& a, const Tensor<U>& b, const char* what)
{
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

template <class T>
T max_value(const Tensor<T>& t)
{
    if (t.empty())
        throw ShapeError("max of empty tensor");
    return *std::max_element(t.storage().begin(), t.storage().end());
}

template <class T>
T min_value(const Tensor<T>& t)
{
    if (t.empty())
        throw ShapeError("min of empty tensor");
    return *std::min_element(t.storage().begin(), t.storage().end());
}

using Image = Tensor<double>;
using ComplexImage = Tensor<std::complex<double>>;
using Mask = Tensor<std::uint8_t>;

} // namespace dwidn
