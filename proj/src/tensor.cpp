#include "voxatn/tensor.hpp"

#include <cmath>
#include <sstream>

namespace voxatn::tengine {

void check_finite(const std::vector<double>& v, const std::string& where) {
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!std::isfinite(v[i]))
            throw InternalError("non-finite value at index " + std::to_string(i) + " in " + where);
}

void check_finite(const Tensor& t, const std::string& where) { check_finite(t.data, where); }

std::string shape_string(const std::vector<int>& shape) {
    std::ostringstream ss;
    ss << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) ss << (i ? "," : "") << shape[i];
    ss << "]";
    return ss.str();
}

}  // namespace voxatn::tengine
