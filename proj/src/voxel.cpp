#include "voxatn/voxel.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace voxatn::voxel {

VoxelGrid voxelize(const cloudio::PointCloud& cloud, const GridSpec& spec) {
    if (cloud.points.empty()) throw UserError("cannot voxelize an empty cloud");
    if (spec.resolution < 1 || spec.extent <= 0) throw UserError("invalid grid spec");

    const int r = spec.resolution;
    VoxelGrid grid;
    grid.spec = spec;
    grid.occupancy.assign(static_cast<std::size_t>(r) * r * r, 0);

    const double o[3] = {spec.origin.x, spec.origin.y, spec.origin.z};
    for (const cloudio::Point3& p : cloud.points) {
        const double c[3] = {p.x, p.y, p.z};
        int idx[3];
        bool inside = true;
        for (int a = 0; a < 3; ++a) {
            const double t = (c[a] - o[a]) / spec.extent;
            if (t < 0.0 || t > 1.0) {
                inside = false;
                break;
            }
            int i = static_cast<int>(std::floor(t * r));
            if (i == r) i = r - 1;  // point exactly on the far face
            idx[a] = i;
        }
        if (!inside) {
            ++grid.dropped_points;
            continue;
        }
        std::uint8_t& cell = grid.occupancy[grid.index(idx[0], idx[1], idx[2])];
        if (!cell) {
            cell = 1;
            ++grid.occupied_count;
        }
    }
    if (grid.occupied_count == 0) throw UserError("empty grid: all points out of bounds");
    return grid;
}

std::vector<double> grid_to_tensor(const VoxelGrid& grid) {
    std::vector<double> t(grid.occupancy.size());
    for (std::size_t i = 0; i < grid.occupancy.size(); ++i) t[i] = grid.occupancy[i] ? 1.0 : 0.0;
    return t;
}

void write_vxg(std::ostream& out, const VoxelGrid& grid) {
    const int r = grid.res();
    out << "VXG1 " << r << " " << r << " " << r << "\n";
    out.write(reinterpret_cast<const char*>(grid.occupancy.data()),
              static_cast<std::streamsize>(grid.occupancy.size()));
}

VoxelGrid read_vxg(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw UserError("VXG: missing header");
    std::istringstream ss(header);
    std::string magic;
    long d = 0, h = 0, w = 0;
    ss >> magic >> d >> h >> w;
    if (magic != "VXG1" || d < 1 || h != d || w != d) throw UserError("VXG: bad header '" + header + "'");

    VoxelGrid grid;
    grid.spec.resolution = static_cast<int>(d);
    grid.occupancy.resize(static_cast<std::size_t>(d) * h * w);
    in.read(reinterpret_cast<char*>(grid.occupancy.data()), static_cast<std::streamsize>(grid.occupancy.size()));
    if (in.gcount() != static_cast<std::streamsize>(grid.occupancy.size()))
        throw UserError("VXG: truncated payload");
    for (std::uint8_t b : grid.occupancy) {
        if (b > 1) throw UserError("VXG: cell byte out of {0,1}");
        grid.occupied_count += b;
    }
    return grid;
}

}  // namespace voxatn::voxel
