#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dg {

// Row-major everywhere. Images are [C,H,W], matrices [rows,cols],
// attention maps [heads,N,L].
using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

template <class S>
struct Tensor {
    Shape shape;
    std::vector<S> v;

    Tensor() = default;
    explicit Tensor(Shape shp) : shape(std::move(shp)), v(numel(shape), S(0)) {}
    Tensor(Shape shp, std::vector<S> data) : shape(std::move(shp)), v(std::move(data)) {
        if (v.size() != numel(shape))
            throw ShapeError("tensor data size " + std::to_string(v.size()) +
                             " does not match shape " + shape_str(shape));
    }

    std::size_t size() const { return v.size(); }
    S* data() { return v.data(); }
    const S* data() const { return v.data(); }
    S& operator[](std::size_t i) { return v[i]; }
    const S& operator[](std::size_t i) const { return v[i]; }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <class S>
bool all_finite(const std::vector<S>& v) {
    for (S x : v)
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

template <class T, class S>
Tensor<T> cast_tensor(const Tensor<S>& t) {
    Tensor<T> out(t.shape);
    for (std::size_t i = 0; i < t.v.size(); ++i) out.v[i] = static_cast<T>(t.v[i]);
    return out;
}

template <class S>
void require_shape(const Tensor<S>& t, const Shape& want, const char* what) {
    if (t.shape != want)
        throw ShapeError(std::string(what) + ": expected " + shape_str(want) + ", got " +
                         shape_str(t.shape));
}

}  // namespace dg
