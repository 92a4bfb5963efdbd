// Times the OpenMP conv3d kernels against the serial reference on
// representative layer shapes and confirms the outputs agree to rounding.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "voxatn/ops.hpp"
#include "voxatn/rng.hpp"

using namespace voxatn;
using namespace voxatn::tengine;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.gaussian();
    return t;
}

template <typename Fn>
double time_ms(Fn fn, int reps) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

// Largest |a - b| / (|a| + 1) over all elements.
double max_rel_diff(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) return 1.0;
    double mx = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = std::fabs(a.data[i] - b.data[i]) / (std::fabs(a.data[i]) + 1.0);
        if (d > mx) mx = d;
    }
    return mx;
}

}  // namespace

int main(int argc, char** argv) {
    const int reps = argc > 1 ? std::atoi(argv[1]) : 3;
    Rng rng(99);

    struct Case {
        const char* name;
        std::vector<int> in_shape, w_shape;
        Conv3dGeom g;
    };
    const Case cases[] = {
        {"conv1 32^3", {2, 1, 32, 32, 32}, {64, 1, 5, 5, 5}, {5, 5, 5, 2, 2, 2, 2, 2, 2}},
        {"conv2 16^3", {2, 64, 16, 16, 16}, {32, 64, 3, 3, 3}, {3, 3, 3, 1, 1, 1, 1, 1, 1}},
        {"conv3 16^3", {2, 32, 16, 16, 16}, {32, 32, 3, 3, 3}, {3, 3, 3, 1, 1, 1, 1, 1, 1}},
    };

    std::printf("%-12s %12s %12s %8s  %s\n", "case", "serial(ms)", "openmp(ms)", "speedup", "max rel err");
    for (const Case& c : cases) {
        const Tensor x = random_tensor(c.in_shape, rng);
        const Tensor w = random_tensor(c.w_shape, rng);
        const Tensor b = random_tensor({c.w_shape[0]}, rng);

        Tensor ref, fast;
        const double t_serial = time_ms([&] { ref = serial::conv3d_forward(x, w, b, c.g); }, reps);
        const double t_omp = time_ms([&] { fast = conv3d_forward(x, w, b, c.g); }, reps);
        const double err = max_rel_diff(ref, fast);

        std::printf("%-12s %12.2f %12.2f %7.2fx  %.2e\n", c.name, t_serial, t_omp, t_serial / t_omp, err);
        if (err > 1e-10) return 1;

        const Tensor up = random_tensor(fast.shape, rng);
        Tensor ig_ref, wg_ref, bg_ref, ig_fast, wg_fast, bg_fast;
        const double tb_serial =
            time_ms([&] { serial::conv3d_backward(up, x, w, c.g, &ig_ref, wg_ref, bg_ref); }, reps);
        const double tb_omp = time_ms([&] { conv3d_backward(up, x, w, c.g, &ig_fast, wg_fast, bg_fast); }, reps);
        const double berr =
            std::max({max_rel_diff(ig_ref, ig_fast), max_rel_diff(wg_ref, wg_fast), max_rel_diff(bg_ref, bg_fast)});

        std::printf("%-12s %12.2f %12.2f %7.2fx  %.2e\n", "  backward", tb_serial, tb_omp, tb_serial / tb_omp,
                    berr);
        if (berr > 1e-10) return 1;
    }
    return 0;
}
