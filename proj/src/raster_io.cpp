#include "wildfire/raster_io.hpp"

#include <tiffio.h>

#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>

#include "wildfire/errors.hpp"

namespace wildfire {
namespace {

thread_local std::string g_tiff_error;

void capture_error(const char* module, const char* fmt, va_list args) {
  char buf[512];
  std::vsnprintf(buf, sizeof buf, fmt, args);
  g_tiff_error = std::string(module ? module : "tiff") + ": " + buf;
}

void ignore_warning(const char*, const char*, va_list) {}

struct TiffCloser {
  void operator()(TIFF* tif) const {
    if (tif) TIFFClose(tif);
  }
};
using TiffHandle = std::unique_ptr<TIFF, TiffCloser>;

TiffHandle open_tiff(const std::filesystem::path& path, const char* mode) {
  TIFFSetErrorHandler(capture_error);
  TIFFSetWarningHandler(ignore_warning);
  g_tiff_error.clear();
  TiffHandle tif(TIFFOpen(path.c_str(), mode));
  if (!tif) {
    throw FormatError("cannot open raster " + path.string() +
                      (g_tiff_error.empty() ? "" : " (" + g_tiff_error + ")"));
  }
  return tif;
}

float sample_to_float(const unsigned char* p, std::uint16_t format, std::uint16_t bits) {
  if (format == SAMPLEFORMAT_IEEEFP) {
    if (bits == 32) {
      float v;
      std::memcpy(&v, p, 4);
      return v;
    }
    double v;
    std::memcpy(&v, p, 8);
    return static_cast<float>(v);
  }
  const bool is_signed = format == SAMPLEFORMAT_INT;
  switch (bits) {
    case 8:
      return is_signed ? static_cast<float>(*reinterpret_cast<const std::int8_t*>(p))
                       : static_cast<float>(*p);
    case 16: {
      std::uint16_t v;
      std::memcpy(&v, p, 2);
      return is_signed ? static_cast<float>(static_cast<std::int16_t>(v)) : static_cast<float>(v);
    }
    default: {
      std::uint32_t v;
      std::memcpy(&v, p, 4);
      return is_signed ? static_cast<float>(static_cast<std::int32_t>(v)) : static_cast<float>(v);
    }
  }
}

}  // namespace

RasterImage read_raster(const std::filesystem::path& path) {
  auto tif = open_tiff(path, "r");
  std::uint32_t width = 0, height = 0;
  std::uint16_t bands = 1, bits = 8, format = SAMPLEFORMAT_UINT, planar = PLANARCONFIG_CONTIG;
  TIFFGetField(tif.get(), TIFFTAG_IMAGEWIDTH, &width);
  TIFFGetField(tif.get(), TIFFTAG_IMAGELENGTH, &height);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLESPERPIXEL, &bands);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_BITSPERSAMPLE, &bits);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLEFORMAT, &format);
  TIFFGetFieldDefaulted(tif.get(), TIFFTAG_PLANARCONFIG, &planar);
  if (width == 0 || height == 0) throw FormatError("raster " + path.string() + " has no pixels");
  const bool float_ok = format == SAMPLEFORMAT_IEEEFP && (bits == 32 || bits == 64);
  const bool int_ok = (format == SAMPLEFORMAT_UINT || format == SAMPLEFORMAT_INT) &&
                      (bits == 8 || bits == 16 || bits == 32);
  if (!float_ok && !int_ok) {
    throw FormatError("raster " + path.string() + ": unsupported sample type (" +
                      std::to_string(bits) + " bits, format " + std::to_string(format) + ")");
  }

  RasterImage image;
  image.bands = bands;
  image.height = static_cast<int>(height);
  image.width = static_cast<int>(width);
  image.data.assign(static_cast<std::size_t>(bands) * height * width, 0.0f);
  const std::size_t bytes = bits / 8;
  const std::size_t plane = static_cast<std::size_t>(height) * width;

  // Stores one decoded run of `count` pixels starting at (row, col).
  auto store = [&](const unsigned char* src, std::uint32_t row, std::uint32_t col,
                   std::uint32_t count, int band) {
    for (std::uint32_t i = 0; i < count; ++i) {
      if (planar == PLANARCONFIG_SEPARATE) {
        image.data[band * plane + row * width + col + i] =
            sample_to_float(src + i * bytes, format, bits);
      } else {
        for (int b = 0; b < bands; ++b) {
          image.data[b * plane + row * width + col + i] =
              sample_to_float(src + (i * bands + b) * bytes, format, bits);
        }
      }
    }
  };

  const int passes = planar == PLANARCONFIG_SEPARATE ? bands : 1;
  if (TIFFIsTiled(tif.get())) {
    std::uint32_t tw = 0, th = 0;
    TIFFGetField(tif.get(), TIFFTAG_TILEWIDTH, &tw);
    TIFFGetField(tif.get(), TIFFTAG_TILELENGTH, &th);
    std::vector<unsigned char> buf(TIFFTileSize(tif.get()));
    const std::size_t tile_row = static_cast<std::size_t>(tw) * bytes *
                                 (planar == PLANARCONFIG_SEPARATE ? 1 : bands);
    for (int band = 0; band < passes; ++band) {
      for (std::uint32_t y = 0; y < height; y += th) {
        for (std::uint32_t x = 0; x < width; x += tw) {
          if (TIFFReadTile(tif.get(), buf.data(), x, y, 0, static_cast<std::uint16_t>(band)) < 0) {
            throw FormatError("raster " + path.string() + ": tile read failed");
          }
          for (std::uint32_t r = 0; r < th && y + r < height; ++r) {
            store(buf.data() + r * tile_row, y + r, x, std::min(tw, width - x), band);
          }
        }
      }
    }
  } else {
    std::vector<unsigned char> buf(TIFFScanlineSize(tif.get()));
    for (int band = 0; band < passes; ++band) {
      for (std::uint32_t row = 0; row < height; ++row) {
        if (TIFFReadScanline(tif.get(), buf.data(), row, static_cast<std::uint16_t>(band)) < 0) {
          throw FormatError("raster " + path.string() + ": scanline read failed");
        }
        store(buf.data(), row, 0, width, band);
      }
    }
  }
  return image;
}

void write_raster(const std::filesystem::path& path, const RasterImage& image) {
  if (image.bands <= 0 || image.height <= 0 || image.width <= 0 ||
      image.data.size() != static_cast<std::size_t>(image.bands) * image.height * image.width) {
    throw FormatError("raster image has inconsistent dimensions");
  }
  auto tif = open_tiff(path, "w");
  TIFF* t = tif.get();
  TIFFSetField(t, TIFFTAG_IMAGEWIDTH, static_cast<std::uint32_t>(image.width));
  TIFFSetField(t, TIFFTAG_IMAGELENGTH, static_cast<std::uint32_t>(image.height));
  TIFFSetField(t, TIFFTAG_SAMPLESPERPIXEL, static_cast<std::uint16_t>(image.bands));
  TIFFSetField(t, TIFFTAG_BITSPERSAMPLE, static_cast<std::uint16_t>(32));
  TIFFSetField(t, TIFFTAG_SAMPLEFORMAT, static_cast<std::uint16_t>(SAMPLEFORMAT_IEEEFP));
  TIFFSetField(t, TIFFTAG_PLANARCONFIG, static_cast<std::uint16_t>(PLANARCONFIG_SEPARATE));
  TIFFSetField(t, TIFFTAG_PHOTOMETRIC, static_cast<std::uint16_t>(PHOTOMETRIC_MINISBLACK));
  TIFFSetField(t, TIFFTAG_COMPRESSION, static_cast<std::uint16_t>(COMPRESSION_NONE));
  TIFFSetField(t, TIFFTAG_ROWSPERSTRIP, static_cast<std::uint32_t>(image.height));
  if (image.bands > 1) {
    std::vector<std::uint16_t> extra(image.bands - 1, EXTRASAMPLE_UNSPECIFIED);
    TIFFSetField(t, TIFFTAG_EXTRASAMPLES, static_cast<std::uint16_t>(extra.size()), extra.data());
  }
  const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
  for (int b = 0; b < image.bands; ++b) {
    // libtiff wants a mutable buffer
    std::vector<float> strip(image.data.begin() + b * plane, image.data.begin() + (b + 1) * plane);
    if (TIFFWriteEncodedStrip(t, static_cast<std::uint32_t>(b), strip.data(),
                              static_cast<tmsize_t>(plane * sizeof(float))) < 0) {
      throw FormatError("raster " + path.string() + ": write failed (" + g_tiff_error + ")");
    }
  }
}

}  // namespace wildfire
