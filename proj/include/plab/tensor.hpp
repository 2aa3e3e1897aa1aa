#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace plab {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major n-d array of doubles. Carrier for images, activations,
// parameters and gradients.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
        data.assign(numel_of(shape), fill);
    }
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != numel_of(shape))
            throw Error("Tensor: shape/data size mismatch");
    }

    // External inputs must be finite; internal math trusts itself.
    static Tensor from_external(std::vector<int> s, std::vector<double> d) {
        Tensor t(std::move(s), std::move(d));
        for (double v : t.data)
            if (!std::isfinite(v)) throw Error("Tensor: non-finite value in external input");
        return t;
    }

    static std::size_t numel_of(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d <= 0) throw Error("Tensor: non-positive dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t numel() const { return data.size(); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // NHWC addressing
    std::size_t idx4(int n, int y, int x, int c) const {
        return ((static_cast<std::size_t>(n) * shape[1] + y) * shape[2] + x) * shape[3] + c;
    }
    double& at4(int n, int y, int x, int c) { return data[idx4(n, y, x, c)]; }
    double at4(int n, int y, int x, int c) const { return data[idx4(n, y, x, c)]; }

    std::size_t idx2(int r, int c) const {
        return static_cast<std::size_t>(r) * shape[1] + c;
    }
    double& at2(int r, int c) { return data[idx2(r, c)]; }
    double at2(int r, int c) const { return data[idx2(r, c)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }
};

} // namespace plab
