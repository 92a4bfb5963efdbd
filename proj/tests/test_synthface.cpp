#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "voxatn/cloudio.hpp"
#include "voxatn/errors.hpp"
#include "voxatn/synthface.hpp"
#include "voxatn/voxel.hpp"

using namespace voxatn;
using namespace voxatn::synthface;
using cloudio::PaiKind;
using cloudio::Point3;
using cloudio::PointCloud;

namespace {

SynthSpec spec_for(PaiKind kind, int points = 4000) {
    SynthSpec s;
    s.kind = kind;
    s.points_per_cloud = points;
    return s;
}

double hamming_fraction(const voxel::VoxelGrid& a, const voxel::VoxelGrid& b) {
    REQUIRE(a.occupancy.size() == b.occupancy.size());
    std::size_t diff = 0;
    for (std::size_t i = 0; i < a.occupancy.size(); ++i) diff += a.occupancy[i] != b.occupancy[i];
    const std::size_t occ = static_cast<std::size_t>(std::max(a.occupied_count, b.occupied_count));
    return static_cast<double>(diff) / static_cast<double>(occ);
}

voxel::VoxelGrid grid_of(const PointCloud& c, int res = 24) {
    voxel::GridSpec gs;
    gs.resolution = res;
    return voxel::voxelize(cloudio::normalize(c), gs);
}

}  // namespace

TEST_CASE("generate_cloud is deterministic per (identity, session) seed") {
    const IdentityParams id = sample_identity(PaiKind::BonaFide, 0, 11);
    const PointCloud a = generate_cloud(id, spec_for(PaiKind::BonaFide), 5);
    const PointCloud b = generate_cloud(id, spec_for(PaiKind::BonaFide), 5);
    REQUIRE(a.points.size() == b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        CHECK(a.points[i].x == b.points[i].x);
        CHECK(a.points[i].y == b.points[i].y);
        CHECK(a.points[i].z == b.points[i].z);
    }
    const PointCloud c = generate_cloud(id, spec_for(PaiKind::BonaFide), 6);
    bool differs = false;
    for (std::size_t i = 0; i < std::min(a.points.size(), c.points.size()); ++i)
        if (a.points[i].x != c.points[i].x) differs = true;
    CHECK(differs);
}

TEST_CASE("cloud metadata matches the request") {
    const IdentityParams id = sample_identity(PaiKind::SiliconeMask, 2, 3);
    const PointCloud c = generate_cloud(id, spec_for(PaiKind::SiliconeMask, 1500), 0);
    CHECK(c.points.size() == 1500);
    CHECK(c.label.kind == PaiKind::SiliconeMask);
    CHECK(c.identity == id.identity_id);
    CHECK(c.space == cloudio::Space::Capture);
}

TEST_CASE("wrap photo clouds lie on a developable sheet") {
    // z of a wrap sample is a function of x alone; fit z = a*cos(pi/2 * x/rx)
    // residuals stay far below the nose height that bona fide clouds carry.
    const IdentityParams id = sample_identity(PaiKind::WrapPhoto, 1, 29);
    SynthSpec spec = spec_for(PaiKind::WrapPhoto);
    spec.noise_sigma = 0.0;  // isolate the geometry
    const PointCloud c = generate_cloud(id, spec, 4);

    std::map<long, std::vector<double>> z_by_x;  // bucket by quantized x
    for (const Point3& p : c.points) z_by_x[std::lround(p.x * 400.0)].push_back(p.z);
    double worst_spread = 0.0;
    for (const auto& [bucket, zs] : z_by_x) {
        if (zs.size() < 2) continue;
        const auto [lo, hi] = std::minmax_element(zs.begin(), zs.end());
        worst_spread = std::max(worst_spread, *hi - *lo);
    }
    CHECK(worst_spread < id.nose_height / 4.0);
}

TEST_CASE("bona fide clouds are not a sheet") {
    const IdentityParams id = sample_identity(PaiKind::BonaFide, 1, 29);
    SynthSpec spec = spec_for(PaiKind::BonaFide);
    spec.noise_sigma = 0.0;
    const PointCloud c = generate_cloud(id, spec, 4);
    std::map<long, std::vector<double>> z_by_x;
    for (const Point3& p : c.points) z_by_x[std::lround(p.x * 400.0)].push_back(p.z);
    double worst_spread = 0.0;
    for (const auto& [bucket, zs] : z_by_x) {
        if (zs.size() < 2) continue;
        const auto [lo, hi] = std::minmax_element(zs.begin(), zs.end());
        worst_spread = std::max(worst_spread, *hi - *lo);
    }
    CHECK(worst_spread > id.nose_height);  // depth varies along y: dome + nose
}

TEST_CASE("attack grids differ from bona fide grids of the same identity index") {
    for (PaiKind attack : {PaiKind::SiliconeMask, PaiKind::WrapPhoto}) {
        const PointCloud bona = generate_cloud(sample_identity(PaiKind::BonaFide, 3, 17), spec_for(PaiKind::BonaFide), 2);
        const PointCloud pai = generate_cloud(sample_identity(attack, 3, 17), spec_for(attack), 2);
        CHECK(hamming_fraction(grid_of(bona), grid_of(pai)) > 0.05);
    }
}

TEST_CASE("mask grids are smoother than bona fide grids") {
    // the silicone mask damps the surface relief, so its occupied shell at a
    // fixed resolution is thinner than the bona fide one
    int bona_cells = 0, mask_cells = 0;
    for (int idx = 0; idx < 3; ++idx) {
        bona_cells += grid_of(generate_cloud(sample_identity(PaiKind::BonaFide, idx, 7), spec_for(PaiKind::BonaFide), 1), 32)
                          .occupied_count;
        mask_cells += grid_of(generate_cloud(sample_identity(PaiKind::SiliconeMask, idx, 7), spec_for(PaiKind::SiliconeMask), 1), 32)
                          .occupied_count;
    }
    CHECK(mask_cells < bona_cells);
}

TEST_CASE("generate_dataset composition and identity tags") {
    DatasetParams p;
    p.bona_identities = 4;
    p.mask_identities = 2;
    p.wrap_identities = 3;
    p.sessions = 2;
    p.points_per_cloud = 600;
    p.master_seed = 5;
    const auto ds = generate_dataset(p);
    REQUIRE(ds.size() == static_cast<std::size_t>((4 + 2 + 3) * 2));

    std::map<PaiKind, std::set<std::string>> ids;
    std::map<std::string, int> sessions_per_id;
    for (const PointCloud& c : ds) {
        ids[c.label.kind].insert(c.identity);
        ++sessions_per_id[c.identity];
        CHECK(c.points.size() == 600);
    }
    CHECK(ids[PaiKind::BonaFide].size() == 4);
    CHECK(ids[PaiKind::SiliconeMask].size() == 2);
    CHECK(ids[PaiKind::WrapPhoto].size() == 3);
    for (const auto& [id, n] : sessions_per_id) CHECK(n == 2);

    // attack identity tags never collide with bona fide tags
    for (const std::string& id : ids[PaiKind::SiliconeMask]) CHECK(ids[PaiKind::BonaFide].count(id) == 0);
    for (const std::string& id : ids[PaiKind::WrapPhoto]) CHECK(ids[PaiKind::BonaFide].count(id) == 0);
}

TEST_CASE("generate_dataset is a pure function of its params") {
    DatasetParams p;
    p.bona_identities = 2;
    p.mask_identities = 2;
    p.wrap_identities = 2;
    p.sessions = 1;
    p.points_per_cloud = 300;
    p.master_seed = 99;
    const auto a = generate_dataset(p);
    const auto b = generate_dataset(p);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].identity == b[i].identity);
        CHECK(a[i].points.size() == b[i].points.size());
        for (std::size_t j = 0; j < a[i].points.size(); ++j) CHECK(a[i].points[j].z == b[i].points[j].z);
    }
    p.master_seed = 100;
    const auto c = generate_dataset(p);
    CHECK(c[0].points[0].x != a[0].points[0].x);
}

TEST_CASE("dataset params are validated") {
    DatasetParams p;
    p.bona_identities = 1;  // cannot be split identity-disjointly later
    CHECK_THROWS_AS(generate_dataset(p), UserError);
    DatasetParams q;
    q.mask_identities = 1;
    CHECK_THROWS_AS(generate_dataset(q), UserError);
    DatasetParams r;
    r.points_per_cloud = 0;
    CHECK_THROWS_AS(generate_dataset(r), UserError);
    DatasetParams s;
    s.sessions = 0;
    CHECK_THROWS_AS(generate_dataset(s), UserError);
}

TEST_CASE("identity parameters vary with the index but not the session") {
    const IdentityParams a = sample_identity(PaiKind::BonaFide, 0, 42);
    const IdentityParams b = sample_identity(PaiKind::BonaFide, 1, 42);
    CHECK(a.identity_id != b.identity_id);
    CHECK(a.head_rx != b.head_rx);
    const IdentityParams a2 = sample_identity(PaiKind::BonaFide, 0, 42);
    CHECK(a.head_rx == a2.head_rx);
    CHECK(a.rng_seed == a2.rng_seed);
}
