#include "voxatn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "voxatn/rng.hpp"

namespace voxatn::tengine {

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-5});
    return std::abs(analytic - numeric) / denom;
}

std::string GradCheckReport::to_string() const {
    std::ostringstream ss;
    for (const GradCheckEntry& e : entries) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "  %-12s coords=%-5zu max_rel_err=%.3e\n", e.name.c_str(), e.coords_checked,
                      e.max_rel_err);
        ss << buf;
    }
    char buf[80];
    std::snprintf(buf, sizeof(buf), "  overall max_rel_err=%.3e\n", max_rel_err);
    ss << buf;
    return ss.str();
}

GradCheckReport gradient_check(net::Model& model, const Tensor& input, const Tensor& targets, double epsilon,
                               std::size_t coords_per_tensor, std::uint64_t seed) {
    model.zero_grads();
    net::ForwardCache cache;
    Tensor probs = model.forward(input, cache);
    model.backward(cache, cross_entropy_backward(probs, targets));

    auto loss_at = [&]() { return cross_entropy_loss(model.forward(input), targets); };

    Rng rng(seed);
    GradCheckReport report;
    const std::vector<Tensor*> params = model.parameters();
    const std::vector<std::string> names = model.parameter_names();

    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor& p = *params[t];
        GradCheckEntry entry;
        entry.name = names[t];

        const std::size_t n = p.data.size();
        const std::size_t count = std::min(coords_per_tensor, n);
        for (std::size_t s = 0; s < count; ++s) {
            // sample without caring about duplicates for large tensors
            const std::size_t i = (n <= coords_per_tensor) ? s : static_cast<std::size_t>(rng.below(n));
            const double saved = p.data[i];
            p.data[i] = saved + epsilon;
            const double plus = loss_at();
            p.data[i] = saved - epsilon;
            const double minus = loss_at();
            p.data[i] = saved;

            const double numeric = (plus - minus) / (2.0 * epsilon);
            const double analytic = p.grad[i];
            entry.max_rel_err = std::max(entry.max_rel_err, relative_error(analytic, numeric));
            ++entry.coords_checked;
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.entries.push_back(entry);
    }
    return report;
}

}  // namespace voxatn::tengine
