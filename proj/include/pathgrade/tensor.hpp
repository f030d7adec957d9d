#pragma once
// Dense row-major tensors of 64-bit floats. Only ranks 1 and 2 are needed;
// a scalar is a rank-1 tensor of length 1.

#include <cstdint>
#include <cmath>
#include <string>
#include <vector>

#include "pathgrade/errors.hpp"

namespace pathgrade {

struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<std::int64_t>(data.size()) != numel_of(shape)) {
            throw DimensionError("tensor: data length does not match shape");
        }
    }

    static std::int64_t numel_of(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<int> s) {
        auto n = numel_of(s);
        return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor vec(std::vector<double> v) {
        int n = static_cast<int>(v.size());
        return Tensor({n}, std::move(v));
    }
    static Tensor matrix(int r, int c, std::vector<double> v) { return Tensor({r, c}, std::move(v)); }

    int ndim() const { return static_cast<int>(shape.size()); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    bool is_scalar() const { return numel() == 1; }

    int rows() const { return shape.at(0); }
    int cols() const {
        if (ndim() != 2) throw DimensionError("tensor: cols() on non-matrix");
        return shape[1];
    }

    double& at(int i) { return data[static_cast<std::size_t>(i)]; }
    double at(int i) const { return data[static_cast<std::size_t>(i)]; }
    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }

    // Pointer to row i of a matrix.
    double* row(int i) { return data.data() + static_cast<std::size_t>(i) * shape[1]; }
    const double* row(int i) const { return data.data() + static_cast<std::size_t>(i) * shape[1]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

}  // namespace pathgrade
