#pragma once

#include <filesystem>
#include <vector>

namespace wildfire {

// Band-major float raster (bands x height x width).
struct RasterImage {
  int bands = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;
};

// Reads a multi-band TIFF/GeoTIFF. Strip and tile layouts, both planar
// configurations and 8/16/32-bit integer or 32/64-bit float samples are
// accepted; everything is converted to float. Throws FormatError.
RasterImage read_raster(const std::filesystem::path& path);

// Writes an uncompressed float32 TIFF with one strip per band.
void write_raster(const std::filesystem::path& path, const RasterImage& image);

}  // namespace wildfire
