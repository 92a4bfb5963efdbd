#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "voxatn/errors.hpp"

namespace voxatn::cloudio {

struct Point3 {
    double x = 0.0, y = 0.0, z = 0.0;
};

enum class PaiKind { BonaFide, SiliconeMask, WrapPhoto };

struct ClassLabel {
    PaiKind kind = PaiKind::BonaFide;

    // PAD is binary: both PAI types collapse to "attack".
    bool is_attack() const { return kind != PaiKind::BonaFide; }
};

PaiKind pai_from_string(const std::string& s);
std::string pai_to_string(PaiKind k);

enum class Space { Capture, Normalized };

struct PointCloud {
    std::vector<Point3> points;
    ClassLabel label;
    std::string identity;
    Space space = Space::Capture;
};

struct AugmentSpec {
    int rotation_copies = 12;
    double jitter_sigma = 0.005;
    bool mirror = true;
    double shift_max = 0.02;
    std::uint64_t rng_seed = 0;
};

// ASCII PLY with float/double x,y,z vertex properties; extra properties ignored.
// Binary PLY is rejected. Errors carry the offending line number.
PointCloud parse_ply(std::istream& in);
PointCloud parse_ply_file(const std::string& path);

void write_ply(std::ostream& out, const PointCloud& cloud);
void write_ply_file(const std::string& path, const PointCloud& cloud);

// Whitespace-separated "x y z" lines; '#' comments and blank lines skipped.
PointCloud parse_xyz(std::istream& in);

// Centroid to the cube center, isotropic scale so the bounding box fits
// [margin, 1-margin]^3 with margin 0.05. Idempotent.
PointCloud normalize(const PointCloud& cloud);

// rotation_copies z-axis rotations about the cube center, each copy then
// jittered / mirrored / shifted per spec and clipped back to [0,1]^3.
// All randomness comes from spec.rng_seed.
std::vector<PointCloud> augment(const PointCloud& cloud, const AugmentSpec& spec);

inline constexpr double kNormMargin = 0.05;

}  // namespace voxatn::cloudio
