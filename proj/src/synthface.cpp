#include "voxatn/synthface.hpp"

#include <cmath>

#include "voxatn/rng.hpp"

namespace voxatn::synthface {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
    x ^= x >> 33;
    x *= 0xFF51AFD7ED558CCDULL;
    x ^= x >> 29;
    return x;
}

// Per-identity high-frequency relief: a fixed bank of sinusoid products.
struct DetailField {
    double fx[3], fy[3], px[3], py[3], w[3];

    explicit DetailField(std::uint64_t seed) {
        Rng rng(seed);
        for (int i = 0; i < 3; ++i) {
            // wavelengths of a few centimeters: coarse enough to survive
            // voxelization, fine relative to the head
            fx[i] = rng.uniform(60.0, 150.0);
            fy[i] = rng.uniform(60.0, 150.0);
            px[i] = rng.uniform(0.0, 2.0 * kPi);
            py[i] = rng.uniform(0.0, 2.0 * kPi);
            w[i] = rng.uniform(0.5, 1.0);
        }
    }

    double at(double x, double y) const {
        double v = 0.0;
        for (int i = 0; i < 3; ++i) v += w[i] * std::sin(fx[i] * x + px[i]) * std::sin(fy[i] * y + py[i]);
        return v / 3.0;
    }
};

}  // namespace

PointCloud generate_cloud(const IdentityParams& id, const SynthSpec& spec, std::uint64_t session_seed) {
    if (spec.points_per_cloud < 100) throw UserError("points_per_cloud must be >= 100");

    const DetailField detail(mix(id.rng_seed, 0xDE7A11));
    Rng rng(mix(id.rng_seed, session_seed));

    // small per-session capture offset
    const double ox = 0.004 * rng.gaussian();
    const double oy = 0.004 * rng.gaussian();
    const double oz = 0.004 * rng.gaussian();

    const double detail_amp =
        spec.kind == PaiKind::SiliconeMask ? 0.2 * id.surface_detail_amp : id.surface_detail_amp;

    // face height field: dome + nose protrusion + identity relief
    auto face_z = [&](double px, double py) {
        const double pq = (px / id.head_rx) * (px / id.head_rx) + (py / id.head_ry) * (py / id.head_ry);
        if (pq > 1.0) return 0.0;
        double z = id.head_rz * std::sqrt(1.0 - pq);
        z += id.nose_height * std::exp(-(px * px + py * py) / (2.0 * id.nose_width * id.nose_width));
        z += detail_amp * detail.at(px, py);
        return z;
    };

    PointCloud cloud;
    cloud.label.kind = spec.kind;
    cloud.identity = id.identity_id;
    cloud.space = cloudio::Space::Capture;
    cloud.points.reserve(static_cast<std::size_t>(spec.points_per_cloud));

    for (int p = 0; p < spec.points_per_cloud; ++p) {
        // uniform sample inside the elliptic silhouette
        double x, y, q;
        do {
            x = rng.uniform(-id.head_rx, id.head_rx);
            y = rng.uniform(-id.head_ry, id.head_ry);
            q = (x / id.head_rx) * (x / id.head_rx) + (y / id.head_ry) * (y / id.head_ry);
        } while (q > 1.0);

        double z;
        if (spec.kind == PaiKind::WrapPhoto) {
            // developable sheet: single curvature along x, no facial relief
            z = 0.5 * id.head_rz * std::cos(0.5 * kPi * x / id.head_rx);
        } else if (spec.kind == PaiKind::SiliconeMask) {
            // cast silicone loses the fine relief: disk-average the height
            // field (global smoothing), which also rounds the nose and the
            // steep rim where the curvature is highest
            constexpr double kBlurRadius = 0.016;
            double acc = face_z(x, y);
            for (int a = 0; a < 8; ++a) {
                const double ang = 2.0 * kPi * a / 8.0;
                acc += face_z(x + kBlurRadius * std::cos(ang), y + kBlurRadius * std::sin(ang));
            }
            z = acc / 9.0;
        } else {
            z = face_z(x, y);
        }

        cloud.points.push_back({x + ox + spec.noise_sigma * rng.gaussian(),
                                y + oy + spec.noise_sigma * rng.gaussian(),
                                z + oz + spec.noise_sigma * rng.gaussian()});
    }
    return cloud;
}

IdentityParams sample_identity(PaiKind kind, int index, std::uint64_t master_seed) {
    IdentityParams id;
    const char* prefix = kind == PaiKind::BonaFide ? "bona" : (kind == PaiKind::SiliconeMask ? "mask" : "wrap");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%02d", prefix, index);
    id.identity_id = buf;
    id.rng_seed = mix(master_seed, mix(static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(index) + 101));

    Rng rng(id.rng_seed);
    // identity variation kept moderate so the class cues (relief richness,
    // nose sharpness, pseudo-depth) dominate the between-class distances
    id.head_rx = 0.09 * rng.uniform(0.93, 1.07);
    id.head_ry = 0.12 * rng.uniform(0.93, 1.07);
    id.head_rz = 0.08 * rng.uniform(0.93, 1.07);
    id.nose_height = rng.uniform(0.022, 0.028);
    id.nose_width = rng.uniform(0.017, 0.022);
    id.surface_detail_amp = rng.uniform(0.011, 0.015);
    return id;
}

std::vector<PointCloud> generate_dataset(const DatasetParams& params) {
    if (params.bona_identities < 2 || params.mask_identities < 2 || params.wrap_identities < 2)
        throw UserError("dataset needs at least 2 identities per class for protocol splits");
    if (params.sessions < 1) throw UserError("sessions must be >= 1");

    std::vector<PointCloud> out;
    out.reserve(static_cast<std::size_t>(params.sessions) *
                (params.bona_identities + params.mask_identities + params.wrap_identities));

    struct ClassPlan {
        PaiKind kind;
        int count;
    };
    const ClassPlan plan[3] = {{PaiKind::BonaFide, params.bona_identities},
                               {PaiKind::SiliconeMask, params.mask_identities},
                               {PaiKind::WrapPhoto, params.wrap_identities}};

    for (const ClassPlan& cls : plan) {
        for (int i = 0; i < cls.count; ++i) {
            const IdentityParams id = sample_identity(cls.kind, i, params.master_seed);
            SynthSpec spec;
            spec.kind = cls.kind;
            spec.points_per_cloud = params.points_per_cloud;
            spec.sessions = params.sessions;
            spec.noise_sigma = params.noise_sigma;
            for (int s = 0; s < params.sessions; ++s) {
                const std::uint64_t session_seed = mix(params.master_seed, mix(id.rng_seed, 7919ULL * (s + 1)));
                out.push_back(generate_cloud(id, spec, session_seed));
            }
        }
    }
    return out;
}

}  // namespace voxatn::synthface
