#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "boostdepth/grid.hpp"

namespace boostdepth::io {

/// Binary P6, 8-bit. Single-channel images are written as gray RGB.
void write_ppm(const std::filesystem::path& path, const ImageBuffer& image);
/// Reads binary P6 (maxval <= 255) into a 3-channel image in [0,1].
ImageBuffer read_ppm(const std::filesystem::path& path);

/// Portable float map, little-endian (scale -1.0), bottom row first.
/// Writes "Pf" for one channel and "PF" for three.
void write_pfm(const std::filesystem::path& path, const Grid<double>& grid);
Grid<double> read_pfm(const std::filesystem::path& path);

/// Invalid depth pixels are stored as 0.
void write_depth(const std::filesystem::path& path, const DepthMap& depth);
/// Pixels that are non-finite or <= 0 come back invalid.
DepthMap read_depth(const std::filesystem::path& path);

/// ASCII PLY with x, y, z double properties.
void write_ply(const std::filesystem::path& path, const std::vector<Eigen::Vector3d>& points);
std::vector<Eigen::Vector3d> read_ply(const std::filesystem::path& path);

}  // namespace boostdepth::io
