#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxatn/cloudio.hpp"

namespace voxatn::synthface {

using cloudio::PaiKind;
using cloudio::PointCloud;

struct IdentityParams {
    std::string identity_id;
    double head_rx = 0.09, head_ry = 0.12, head_rz = 0.08;  // meters
    double nose_height = 0.025;
    double nose_width = 0.02;
    double surface_detail_amp = 0.004;
    std::uint64_t rng_seed = 0;
};

struct SynthSpec {
    PaiKind kind = PaiKind::BonaFide;
    int points_per_cloud = 5000;
    int sessions = 10;
    double noise_sigma = 0.0015;
};

// Class-dependent face-like surface:
//   BonaFide     front half-ellipsoid + nose bump + high-frequency detail
//   SiliconeMask same geometry, detail x0.2, blurred nose profile
//   WrapPhoto    cylindrically bent sheet fit to the silhouette, no nose
// Sensor noise and sampling are driven entirely by the seeds.
PointCloud generate_cloud(const IdentityParams& identity, const SynthSpec& spec, std::uint64_t session_seed);

struct DatasetParams {
    int bona_identities = 12;
    int mask_identities = 4;
    int wrap_identities = 8;
    int sessions = 10;
    int points_per_cloud = 5000;
    double noise_sigma = 0.0015;
    std::uint64_t master_seed = 7;
};

// Labeled multi-session clouds with identity tags for protocol splitting.
std::vector<PointCloud> generate_dataset(const DatasetParams& params);

IdentityParams sample_identity(PaiKind kind, int index, std::uint64_t master_seed);

}  // namespace voxatn::synthface
