#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace svae {

/// 8-bit raster, row-major, 1 (gray) or 3 (RGB) channels.
struct Raster {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;
    std::vector<std::uint8_t> pixels;
};

/// Intensities in [0,1] (clamped) to gray, optionally upscaled by nearest neighbour.
Raster gray_raster(std::span<const double> values, std::size_t height, std::size_t width, std::size_t zoom = 1);

/// Tiles equally sized images into rows x cols with a `gap`-pixel border.
Raster tile_rasters(const std::vector<Raster>& tiles, std::size_t rows, std::size_t cols, std::size_t gap = 1);

/// Blue-white-red map of v / max|v|; an all-zero map is plain white.
Raster diverging_heatmap(std::span<const double> values, std::size_t height, std::size_t width, std::size_t zoom = 1);

/// Gray to RGB by channel replication; RGB passes through.
Raster to_rgb(const Raster& r);

std::vector<std::uint8_t> encode_png(const Raster& r);
void write_png(const Raster& r, const std::filesystem::path& path);
Raster decode_png(std::span<const std::uint8_t> bytes);

}  // namespace svae
