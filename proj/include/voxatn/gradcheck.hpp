#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxatn/model.hpp"

namespace voxatn::tengine {

struct GradCheckEntry {
    std::string name;
    std::size_t coords_checked = 0;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;

    bool passes(double tolerance) const { return max_rel_err < tolerance; }
    std::string to_string() const;
};

// Compares the analytic gradient of cross_entropy(model(input), targets)
// against central finite differences on a sampled subset of each parameter
// tensor's coordinates.
GradCheckReport gradient_check(net::Model& model, const Tensor& input, const Tensor& targets, double epsilon,
                               std::size_t coords_per_tensor, std::uint64_t seed);

double relative_error(double analytic, double numeric);

}  // namespace voxatn::tengine
