#pragma once

#include <string>

#include "ba/image.hpp"

namespace ba::io {

// Netpbm rasters are written 8-bit with values clamped to [0,1] and scaled
// to [0,255]. Readers accept maxval up to 65535.

/// Writes P5 (1 channel) or P6 (3 channels) depending on channel count.
void write_pnm(const std::string& path, const ImageF& img);
void write_pgm(const std::string& path, const Map& map);
void write_ppm(const std::string& path, const ImageF& img);
/// Reads P5 or P6. Values are divided by maxval.
ImageF read_pnm(const std::string& path);

/// PFM: "Pf" for 1 channel, "PF" for 3, little-endian float32, scanlines
/// stored bottom-to-top as the format requires.
void write_pfm(const std::string& path, const ImageF& img);
ImageF read_pfm(const std::string& path);

/// Picks a reader by extension (.pfm vs .pgm/.ppm/.pnm).
ImageF read_image(const std::string& path);

/// Quantizes to the 8-bit grid write_pnm uses.
ImageF quantize8(const ImageF& img);

}  // namespace ba::io
