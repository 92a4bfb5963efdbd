#include "voxatn/cloudio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "voxatn/rng.hpp"

namespace voxatn::cloudio {

namespace {

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
    throw UserError("parse error at line " + std::to_string(line) + ": " + what);
}

bool parse_double(const std::string& tok, double& out) {
    try {
        std::size_t pos = 0;
        out = std::stod(tok, &pos);
        return pos == tok.size() && std::isfinite(out);
    } catch (...) {
        return false;
    }
}

}  // namespace

PaiKind pai_from_string(const std::string& s) {
    if (s == "bonafide") return PaiKind::BonaFide;
    if (s == "mask") return PaiKind::SiliconeMask;
    if (s == "wrap") return PaiKind::WrapPhoto;
    throw UserError("unknown class label: " + s);
}

std::string pai_to_string(PaiKind k) {
    switch (k) {
        case PaiKind::BonaFide: return "bonafide";
        case PaiKind::SiliconeMask: return "mask";
        case PaiKind::WrapPhoto: return "wrap";
    }
    throw InternalError("unreachable PaiKind");
}

PointCloud parse_ply(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;

    auto next_line = [&](const char* ctx) {
        if (!std::getline(in, line)) parse_fail(lineno, std::string("unexpected end of file in ") + ctx);
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    };

    if (next_line("header") != "ply") parse_fail(lineno, "missing 'ply' magic");

    long vertex_count = -1;
    bool in_vertex_element = false;
    int prop_index = 0;
    int ix = -1, iy = -1, iz = -1;
    int vertex_props = 0;

    for (;;) {
        next_line("header");
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        if (tok == "comment" || tok == "obj_info" || tok.empty()) continue;
        if (tok == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt != "ascii") parse_fail(lineno, "only ASCII PLY is supported, got format '" + fmt + "'");
            continue;
        }
        if (tok == "element") {
            std::string name;
            long count = 0;
            ss >> name >> count;
            in_vertex_element = (name == "vertex");
            if (in_vertex_element) {
                if (count < 0) parse_fail(lineno, "negative vertex count");
                vertex_count = count;
                prop_index = 0;
            }
            continue;
        }
        if (tok == "property") {
            if (!in_vertex_element) continue;
            std::string type, name;
            ss >> type >> name;
            if (type == "list") parse_fail(lineno, "list property not supported on vertex element");
            if (name == "x") ix = prop_index;
            if (name == "y") iy = prop_index;
            if (name == "z") iz = prop_index;
            ++prop_index;
            ++vertex_props;
            continue;
        }
        if (tok == "end_header") break;
        parse_fail(lineno, "unrecognized header token '" + tok + "'");
    }

    if (vertex_count < 0) parse_fail(lineno, "no vertex element declared");
    if (ix < 0 || iy < 0 || iz < 0) parse_fail(lineno, "vertex element lacks x/y/z properties");

    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(vertex_count));
    for (long v = 0; v < vertex_count; ++v) {
        next_line("vertex data");
        std::istringstream ss(line);
        std::string tok;
        Point3 p;
        for (int i = 0; i < vertex_props; ++i) {
            if (!(ss >> tok)) parse_fail(lineno, "vertex record has too few values");
            if (i == ix || i == iy || i == iz) {
                double val;
                if (!parse_double(tok, val)) parse_fail(lineno, "non-finite or non-numeric coordinate '" + tok + "'");
                if (i == ix) p.x = val;
                if (i == iy) p.y = val;
                if (i == iz) p.z = val;
            }
        }
        cloud.points.push_back(p);
    }
    if (cloud.points.empty()) parse_fail(lineno, "PLY declares zero vertices");
    return cloud;
}

PointCloud parse_ply_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UserError("cannot open " + path);
    return parse_ply(f);
}

void write_ply(std::ostream& out, const PointCloud& cloud) {
    out << "ply\nformat ascii 1.0\n";
    out << "element vertex " << cloud.points.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    out << "end_header\n";
    char buf[96];
    for (const Point3& p : cloud.points) {
        std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g\n", p.x, p.y, p.z);
        out << buf;
    }
}

void write_ply_file(const std::string& path, const PointCloud& cloud) {
    std::ofstream f(path);
    if (!f) throw UserError("cannot open " + path + " for writing");
    write_ply(f, cloud);
}

PointCloud parse_xyz(std::istream& in) {
    PointCloud cloud;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t start = line.find_first_not_of(" \t\r");
        if (start == std::string::npos || line[start] == '#') continue;
        std::istringstream ss(line);
        std::string tx, ty, tz;
        if (!(ss >> tx >> ty >> tz)) parse_fail(lineno, "expected three coordinates");
        Point3 p;
        if (!parse_double(tx, p.x) || !parse_double(ty, p.y) || !parse_double(tz, p.z))
            parse_fail(lineno, "non-numeric token");
        cloud.points.push_back(p);
    }
    if (cloud.points.empty()) throw UserError("xyz input contains no points");
    return cloud;
}

PointCloud normalize(const PointCloud& cloud) {
    if (cloud.points.empty()) throw UserError("cannot normalize an empty cloud");

    double cx = 0, cy = 0, cz = 0;
    double lo[3] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                    std::numeric_limits<double>::infinity()};
    double hi[3] = {-lo[0], -lo[1], -lo[2]};
    for (const Point3& p : cloud.points) {
        cx += p.x;
        cy += p.y;
        cz += p.z;
        lo[0] = std::min(lo[0], p.x);
        hi[0] = std::max(hi[0], p.x);
        lo[1] = std::min(lo[1], p.y);
        hi[1] = std::max(hi[1], p.y);
        lo[2] = std::min(lo[2], p.z);
        hi[2] = std::max(hi[2], p.z);
    }
    const double n = static_cast<double>(cloud.points.size());
    cx /= n;
    cy /= n;
    cz /= n;

    // Largest distance from the centroid to any bounding-box face decides the
    // isotropic scale; that face lands exactly on the margin.
    const double c[3] = {cx, cy, cz};
    double reach = 0.0;
    for (int a = 0; a < 3; ++a) reach = std::max({reach, c[a] - lo[a], hi[a] - c[a]});
    if (reach <= 0.0) throw UserError("zero extent: all points are identical");

    const double scale = (0.5 - kNormMargin) / reach;
    PointCloud out;
    out.label = cloud.label;
    out.identity = cloud.identity;
    out.space = Space::Normalized;
    out.points.reserve(cloud.points.size());
    for (const Point3& p : cloud.points)
        out.points.push_back({0.5 + scale * (p.x - cx), 0.5 + scale * (p.y - cy), 0.5 + scale * (p.z - cz)});
    return out;
}

std::vector<PointCloud> augment(const PointCloud& cloud, const AugmentSpec& spec) {
    if (spec.rotation_copies < 1) throw UserError("rotation_copies must be >= 1");
    if (spec.jitter_sigma < 0 || spec.shift_max < 0) throw UserError("negative augmentation magnitude");
    if (cloud.space != Space::Normalized) throw UserError("augment expects a normalized cloud");

    Rng rng(spec.rng_seed);
    std::vector<PointCloud> out;
    out.reserve(static_cast<std::size_t>(spec.rotation_copies));

    const double two_pi = 6.283185307179586476925286766559;
    for (int k = 0; k < spec.rotation_copies; ++k) {
        const double theta = two_pi * static_cast<double>(k) / static_cast<double>(spec.rotation_copies);
        const double ct = std::cos(theta), st = std::sin(theta);

        PointCloud copy;
        copy.label = cloud.label;
        copy.identity = cloud.identity;
        copy.space = Space::Normalized;
        copy.points.reserve(cloud.points.size());

        const bool do_mirror = spec.mirror && rng.uniform() < 0.5;
        double shift[3] = {0, 0, 0};
        if (spec.shift_max > 0)
            for (double& s : shift) s = rng.uniform(-spec.shift_max, spec.shift_max);

        for (const Point3& p : cloud.points) {
            // rotate about the vertical axis through the cube center
            double x = 0.5 + ct * (p.x - 0.5) - st * (p.y - 0.5);
            double y = 0.5 + st * (p.x - 0.5) + ct * (p.y - 0.5);
            double z = p.z;
            if (k == 0) {
                x = p.x;  // keep copy 0 bit-identical to the input
                y = p.y;
            }
            if (spec.jitter_sigma > 0) {
                x += spec.jitter_sigma * rng.gaussian();
                y += spec.jitter_sigma * rng.gaussian();
                z += spec.jitter_sigma * rng.gaussian();
            }
            if (do_mirror) x = 1.0 - x;
            x += shift[0];
            y += shift[1];
            z += shift[2];
            copy.points.push_back({std::clamp(x, 0.0, 1.0), std::clamp(y, 0.0, 1.0), std::clamp(z, 0.0, 1.0)});
        }
        out.push_back(std::move(copy));
    }
    return out;
}

}  // namespace voxatn::cloudio
