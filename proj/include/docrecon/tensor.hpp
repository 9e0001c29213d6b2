#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace docrecon {

enum class Mode { train, eval };

// Storage precision of learnable tensors. f16 rounds parameters to the nearest
// binary16 value after every update; arithmetic stays in 32-bit.
enum class Precision { f32, f16 };

float round_to_half(float v) noexcept;
std::uint16_t float_to_half_bits(float v) noexcept;
float half_bits_to_float(std::uint16_t h) noexcept;

template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> dims, T fill = T(0)) : shape(std::move(dims)), data(numel(shape), fill) {}

    static std::size_t numel(const std::vector<int>& dims) {
        return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                               [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
    }

    std::size_t size() const noexcept { return data.size(); }
    int rank() const noexcept { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }

    T* ptr() noexcept { return data.data(); }
    const T* ptr() const noexcept { return data.data(); }
    std::span<T> span() noexcept { return data; }
    std::span<const T> span() const noexcept { return data; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
    void reshape(std::vector<int> dims);

    bool operator==(const Tensor&) const = default;
};

// Throws ErrorKind::shape_mismatch with `what` when shapes differ.
void require_shape(const std::vector<int>& actual, const std::vector<int>& expected, const std::string& what);
std::string shape_string(const std::vector<int>& shape);

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Parameter() = default;
    Parameter(std::string n, std::vector<int> shape, T fill = T(0))
        : name(std::move(n)), value(shape, fill), grad(shape, T(0)) {}

    void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
void Tensor<T>::reshape(std::vector<int> dims) {
    require_shape({static_cast<int>(numel(dims))}, {static_cast<int>(size())}, "reshape");
    shape = std::move(dims);
}

}  // namespace docrecon
