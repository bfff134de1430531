#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ids {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

/// Dense row-major 64-bit float array. Values flowing through the network
/// are kept finite; check_finite() is called at module boundaries.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (shape_numel(shape) != data.size())
            throw std::invalid_argument("Tensor: shape " + shape_str(shape) +
                                        " does not match data length " + std::to_string(data.size()));
    }

    static Tensor zeros(Shape s) {
        std::size_t n = shape_numel(s);
        return Tensor{std::move(s), std::vector<double>(n, 0.0)};
    }
    static Tensor full(Shape s, double v) {
        std::size_t n = shape_numel(s);
        return Tensor{std::move(s), std::vector<double>(n, v)};
    }
    static Tensor scalar(double v) { return Tensor{{}, {v}}; }
    static Tensor vec(std::vector<double> d) {
        Shape s{d.size()};
        return Tensor{std::move(s), std::move(d)};
    }

    std::size_t size() const { return data.size(); }
    std::size_t rows() const { return shape.at(0); }
    std::size_t cols() const { return shape.at(1); }

    double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void check_finite(const std::string& where) const {
        for (double v : data)
            if (!std::isfinite(v))
                throw std::runtime_error("non-finite value in " + where);
    }
};

}  // namespace ids
