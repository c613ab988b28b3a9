#pragma once

#include <string>
#include <vector>

#include "gundet/errors.hpp"

namespace gundet {

/// One frame in HWC layout, values normalized to [0,1].
struct FrameTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;

  FrameTensor() = default;
  FrameTensor(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        values(static_cast<size_t>(h) * w * c, fill) {
    if (h <= 0 || w <= 0 || c <= 0)
      throw ValidationError("frame dimensions must be positive");
  }

  double& at(int y, int x, int c) {
    return values[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return values[(static_cast<size_t>(y) * width + x) * channels + c];
  }

  bool same_shape(const FrameTensor& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

void validate_frame(const FrameTensor& f);

/// Reads .pgm (P5), .ppm (P6) or .png into a normalized frame.
FrameTensor read_image(const std::string& path);

/// Writes by extension: .pgm (1 channel), .ppm (3 channels), .png (1/3/4).
void write_image(const std::string& path, const FrameTensor& frame);

/// Bilinear resize with the half-pixel center convention. Same-size input is
/// returned unchanged (bit-exact).
FrameTensor resize_bilinear(const FrameTensor& frame, int out_height,
                            int out_width);

struct LetterboxMap {
  double scale = 1.0;  // source -> canvas
  double pad_x = 0.0;
  double pad_y = 0.0;
};

/// Aspect-preserving resize onto a square canvas, padded with `fill`.
FrameTensor letterbox(const FrameTensor& frame, int canvas_size,
                      LetterboxMap* map, double fill = 0.5);

}  // namespace gundet
