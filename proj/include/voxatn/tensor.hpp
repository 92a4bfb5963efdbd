#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "voxatn/errors.hpp"

namespace voxatn::tengine {

// Dense row-major 64-bit tensor with an optional gradient buffer.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty when gradients are not tracked
    bool requires_grad = false;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, bool track_grad = false) : shape(std::move(s)), requires_grad(track_grad) {
        data.assign(numel(), 0.0);
        if (requires_grad) grad.assign(data.size(), 0.0);
    }

    std::size_t numel() const {
        std::size_t n = 1;
        for (int d : shape) {
            if (d < 1) throw InternalError("non-positive tensor dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    void zero_grad() {
        if (requires_grad) grad.assign(data.size(), 0.0);
    }

    void enable_grad() {
        requires_grad = true;
        grad.assign(data.size(), 0.0);
    }
};

void check_finite(const Tensor& t, const std::string& where);
void check_finite(const std::vector<double>& v, const std::string& where);

std::string shape_string(const std::vector<int>& shape);

}  // namespace voxatn::tengine
