#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace gundet {

struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 gray, 3 rgb, 4 rgba
  std::vector<uint8_t> pixels;  // row-major, interleaved
};

/// Minimal PNG writer: 8-bit gray/RGB/RGBA, non-interlaced, filter 0 rows.
/// `text_chunks` become tEXt entries (keyword, value).
void png_write(const std::string& path, const PngImage& img,
               const std::vector<std::pair<std::string, std::string>>&
                   text_chunks = {});

/// Minimal PNG reader for the subset the writer emits plus Sub/Up/Average/
/// Paeth filtered rows. Throws DataError on anything else.
PngImage png_read(const std::string& path);

/// Parses IHDR only; cheap dimension probe.
PngImage png_read_header(const std::string& path);

}  // namespace gundet
