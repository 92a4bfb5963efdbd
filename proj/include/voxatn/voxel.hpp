#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "voxatn/cloudio.hpp"

namespace voxatn::voxel {

struct GridSpec {
    int resolution = 64;
    cloudio::Point3 origin{0.0, 0.0, 0.0};
    double extent = 1.0;
};

struct VoxelGrid {
    GridSpec spec;
    std::vector<std::uint8_t> occupancy;  // D*H*W, W fastest (x->D, y->H, z->W)
    int occupied_count = 0;
    int dropped_points = 0;  // out-of-bounds points discarded during voxelization

    int res() const { return spec.resolution; }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * spec.resolution + j) * spec.resolution + k;
    }
    std::uint8_t at(int i, int j, int k) const { return occupancy[index(i, j, k)]; }
};

// floor((p - origin)/extent * resolution) per axis; far-boundary indices clamp
// to resolution-1; out-of-bounds points are dropped and counted.
VoxelGrid voxelize(const cloudio::PointCloud& cloud, const GridSpec& spec);

// Flat [1, D, H, W] buffer of 0.0/1.0 for the network input.
std::vector<double> grid_to_tensor(const VoxelGrid& grid);

// "VXG1 <D> <H> <W>\n" followed by D*H*W raw bytes, W fastest.
void write_vxg(std::ostream& out, const VoxelGrid& grid);
VoxelGrid read_vxg(std::istream& in);

}  // namespace voxatn::voxel
