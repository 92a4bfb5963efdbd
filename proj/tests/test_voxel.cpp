#include <cmath>
#include <cstdint>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "voxatn/errors.hpp"
#include "voxatn/rng.hpp"
#include "voxatn/voxel.hpp"

using namespace voxatn;
using namespace voxatn::voxel;
using cloudio::Point3;
using cloudio::PointCloud;

namespace {

// Independent oracle: literal floor discretization of each point, with the
// far boundary folded onto the last cell and everything else discarded.
VoxelGrid naive_voxelize(const PointCloud& cloud, const GridSpec& spec) {
    const int r = spec.resolution;
    VoxelGrid g;
    g.spec = spec;
    g.occupancy.assign(static_cast<std::size_t>(r) * r * r, 0);
    for (const Point3& p : cloud.points) {
        const double fx = (p.x - spec.origin.x) / spec.extent;
        const double fy = (p.y - spec.origin.y) / spec.extent;
        const double fz = (p.z - spec.origin.z) / spec.extent;
        int i = static_cast<int>(std::floor(fx * r));
        int j = static_cast<int>(std::floor(fy * r));
        int k = static_cast<int>(std::floor(fz * r));
        if (fx == 1.0) i = r - 1;
        if (fy == 1.0) j = r - 1;
        if (fz == 1.0) k = r - 1;
        if (i < 0 || i >= r || j < 0 || j >= r || k < 0 || k >= r) {
            ++g.dropped_points;
            continue;
        }
        std::uint8_t& cell = g.occupancy[g.index(i, j, k)];
        if (!cell) {
            cell = 1;
            ++g.occupied_count;
        }
    }
    return g;
}

PointCloud random_cloud(Rng& rng, int n, double lo, double hi) {
    PointCloud c;
    c.points.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) c.points.push_back({rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)});
    return c;
}

}  // namespace

TEST_CASE("voxelize matches the naive oracle on random clouds") {
    Rng rng(2024);
    for (int iter = 0; iter < 50; ++iter) {
        GridSpec spec;
        spec.resolution = 4 + static_cast<int>(rng.uniform() * 29);
        // points straddle the boundary so some are dropped
        const PointCloud c = random_cloud(rng, 200, -0.1, 1.1);
        const VoxelGrid got = voxelize(c, spec);
        const VoxelGrid want = naive_voxelize(c, spec);
        REQUIRE(got.occupancy == want.occupancy);
        CHECK(got.occupied_count == want.occupied_count);
        CHECK(got.dropped_points == want.dropped_points);
    }
}

TEST_CASE("points exactly on the far boundary land in the last cell") {
    PointCloud c;
    c.points = {{1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}, {1.0, 0.5, 0.0}};
    GridSpec spec;
    spec.resolution = 8;
    const VoxelGrid g = voxelize(c, spec);
    CHECK(g.at(7, 7, 7) == 1);
    CHECK(g.at(0, 0, 0) == 1);
    CHECK(g.at(7, 4, 0) == 1);
    CHECK(g.dropped_points == 0);
    CHECK(g.occupied_count == 3);
}

TEST_CASE("out-of-bounds points are dropped and counted") {
    PointCloud c;
    c.points = {{-0.001, 0.5, 0.5}, {0.5, 1.001, 0.5}, {0.5, 0.5, 0.5}};
    GridSpec spec;
    spec.resolution = 4;
    const VoxelGrid g = voxelize(c, spec);
    CHECK(g.dropped_points == 2);
    CHECK(g.occupied_count == 1);
}

TEST_CASE("duplicate points occupy a cell once") {
    PointCloud c;
    c.points = {{0.3, 0.3, 0.3}, {0.3001, 0.3001, 0.3001}, {0.31, 0.3, 0.3}};
    GridSpec spec;
    spec.resolution = 4;  // all three share cell (1,1,1)
    const VoxelGrid g = voxelize(c, spec);
    CHECK(g.occupied_count == 1);
    CHECK(g.at(1, 1, 1) == 1);
}

TEST_CASE("non-unit grid spec offsets and scales") {
    PointCloud c;
    c.points = {{2.5, 3.5, 4.5}};
    GridSpec spec;
    spec.resolution = 4;
    spec.origin = {2.0, 3.0, 4.0};
    spec.extent = 2.0;
    const VoxelGrid g = voxelize(c, spec);
    CHECK(g.at(1, 1, 1) == 1);  // (0.25 of extent) * 4 -> cell 1
    CHECK(g.occupied_count == 1);
}

TEST_CASE("grid_to_tensor emits 0/1 doubles in W-fastest order") {
    PointCloud c;
    c.points = {{0.0, 0.0, 0.9}};
    GridSpec spec;
    spec.resolution = 2;
    const VoxelGrid g = voxelize(c, spec);
    const std::vector<double> t = grid_to_tensor(g);
    REQUIRE(t.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) CHECK(t[i] == (i == 1 ? 1.0 : 0.0));  // (0,0,1) -> flat index 1
}

TEST_CASE("vxg stream round trip preserves every field") {
    Rng rng(5);
    GridSpec spec;
    spec.resolution = 9;
    const VoxelGrid g = voxelize(random_cloud(rng, 300, -0.05, 1.05), spec);
    std::ostringstream out;
    write_vxg(out, g);
    std::istringstream in(out.str());
    const VoxelGrid back = read_vxg(in);
    CHECK(back.res() == g.res());
    CHECK(back.occupancy == g.occupancy);
    CHECK(back.occupied_count == g.occupied_count);
}

TEST_CASE("vxg reader rejects garbage") {
    std::istringstream bad_magic("VXG9 2 2 2\n\0\0\0\0\0\0\0\0");
    CHECK_THROWS_AS(read_vxg(bad_magic), UserError);
    std::istringstream truncated("VXG1 2 2 2\n\0\0\0");
    CHECK_THROWS_AS(read_vxg(truncated), UserError);
    std::istringstream bad_dims("VXG1 0 2 2\n");
    CHECK_THROWS_AS(read_vxg(bad_dims), UserError);
}

TEST_CASE("voxelize validates the spec") {
    PointCloud c;
    c.points = {{0.5, 0.5, 0.5}};
    GridSpec spec;
    spec.resolution = 0;
    CHECK_THROWS_AS(voxelize(c, spec), UserError);
    spec.resolution = 8;
    spec.extent = 0.0;
    CHECK_THROWS_AS(voxelize(c, spec), UserError);
}
