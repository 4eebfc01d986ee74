#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "fedprune/errors.hpp"

namespace fedprune {

/// Dense row-major tensor of doubles. Deliberately minimal: shape plus a flat
/// value array, with the couple of elementwise helpers the trainer needs.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0) : shape(std::move(s)) {
        values.assign(count(shape), fill);
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    std::size_t size() const { return values.size(); }
    bool empty() const { return values.empty(); }

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    // 2-D and 3-D accessors; layouts are row-major [r][c] and [a][b][c].
    double& at2(std::size_t r, std::size_t c) { return values[r * shape[1] + c]; }
    double at2(std::size_t r, std::size_t c) const { return values[r * shape[1] + c]; }
    double& at3(std::size_t a, std::size_t b, std::size_t c) {
        return values[(a * shape[1] + b) * shape[2] + c];
    }
    double at3(std::size_t a, std::size_t b, std::size_t c) const {
        return values[(a * shape[1] + b) * shape[2] + c];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(double v) { std::fill(values.begin(), values.end(), v); }

    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double squared_l2() const {
        double s = 0.0;
        for (double v : values) s += v * v;
        return s;
    }
};

inline bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.values == b.values;
}

inline std::string shape_string(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace fedprune
