#include "gundet/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gundet/png_io.hpp"

namespace gundet {

namespace {

bool has_suffix(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() &&
         s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

// Skips whitespace and '#' comment lines in PNM headers.
int read_pnm_int(std::istream& in) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF) throw DataError("pnm: truncated header");
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = in.get();
  }
  return v;
}

FrameTensor read_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open image: " + path);
  char magic[2];
  f.read(magic, 2);
  if (!f || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
    throw DataError("pnm: unsupported format (want binary P5/P6): " + path);
  const int channels = magic[1] == '6' ? 3 : 1;
  const int w = read_pnm_int(f);
  const int h = read_pnm_int(f);
  const int maxval = read_pnm_int(f);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
    throw DataError("pnm: bad header: " + path);
  const size_t n = static_cast<size_t>(w) * h * channels;
  std::vector<uint8_t> bytes(n);
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
  if (!f) throw DataError("pnm: truncated pixel data: " + path);
  FrameTensor frame(h, w, channels);
  const double inv = 1.0 / maxval;
  for (size_t i = 0; i < n; ++i) frame.values[i] = bytes[i] * inv;
  return frame;
}

void write_pnm(const std::string& path, const FrameTensor& frame) {
  if (frame.channels != 1 && frame.channels != 3)
    throw ValidationError("pnm: only 1 or 3 channels");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open image for write: " + path);
  f << (frame.channels == 3 ? "P6" : "P5") << "\n"
    << frame.width << " " << frame.height << "\n255\n";
  std::vector<uint8_t> bytes(frame.values.size());
  for (size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = static_cast<uint8_t>(
        std::lround(std::clamp(frame.values[i], 0.0, 1.0) * 255.0));
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("pnm: write failed: " + path);
}

FrameTensor from_png(const PngImage& img) {
  FrameTensor frame(img.height, img.width, img.channels == 4 ? 3 : img.channels);
  const double inv = 1.0 / 255.0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < frame.channels; ++c)
        frame.at(y, x, c) =
            img.pixels[(static_cast<size_t>(y) * img.width + x) * img.channels + c] *
            inv;
  return frame;
}

}  // namespace

void validate_frame(const FrameTensor& f) {
  if (f.height <= 0 || f.width <= 0 || f.channels <= 0)
    throw ValidationError("frame dimensions must be positive");
  if (f.values.size() != static_cast<size_t>(f.height) * f.width * f.channels)
    throw ValidationError("frame buffer size mismatch");
  for (double v : f.values)
    if (!(v >= 0.0 && v <= 1.0))
      throw ValidationError("frame values must lie in [0,1]");
}

FrameTensor read_image(const std::string& path) {
  if (has_suffix(path, ".png")) return from_png(png_read(path));
  if (has_suffix(path, ".ppm") || has_suffix(path, ".pgm")) return read_pnm(path);
  throw DataError("unsupported image format: " + path);
}

void write_image(const std::string& path, const FrameTensor& frame) {
  if (has_suffix(path, ".png")) {
    PngImage img;
    img.width = frame.width;
    img.height = frame.height;
    img.channels = frame.channels;
    img.pixels.resize(frame.values.size());
    for (size_t i = 0; i < img.pixels.size(); ++i)
      img.pixels[i] = static_cast<uint8_t>(
          std::lround(std::clamp(frame.values[i], 0.0, 1.0) * 255.0));
    png_write(path, img);
    return;
  }
  if (has_suffix(path, ".ppm") || has_suffix(path, ".pgm")) {
    write_pnm(path, frame);
    return;
  }
  throw DataError("unsupported image format: " + path);
}

FrameTensor resize_bilinear(const FrameTensor& frame, int out_height,
                            int out_width) {
  if (out_height <= 0 || out_width <= 0)
    throw ValidationError("resize target must be positive");
  if (out_height == frame.height && out_width == frame.width) return frame;

  FrameTensor out(out_height, out_width, frame.channels);
  const double sy = static_cast<double>(frame.height) / out_height;
  const double sx = static_cast<double>(frame.width) / out_width;
  for (int y = 0; y < out_height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(frame.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, frame.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(frame.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, frame.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < frame.channels; ++c) {
        const double top =
            frame.at(y0, x0, c) * (1.0 - wx) + frame.at(y0, x1, c) * wx;
        const double bot =
            frame.at(y1, x0, c) * (1.0 - wx) + frame.at(y1, x1, c) * wx;
        out.at(y, x, c) = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return out;
}

FrameTensor letterbox(const FrameTensor& frame, int canvas_size,
                      LetterboxMap* map, double fill) {
  if (canvas_size <= 0) throw ValidationError("letterbox canvas must be positive");
  const double scale =
      std::min(static_cast<double>(canvas_size) / frame.width,
               static_cast<double>(canvas_size) / frame.height);
  const int new_w = std::max(1, static_cast<int>(std::round(frame.width * scale)));
  const int new_h = std::max(1, static_cast<int>(std::round(frame.height * scale)));
  const FrameTensor resized = resize_bilinear(frame, new_h, new_w);
  const int pad_x = (canvas_size - new_w) / 2;
  const int pad_y = (canvas_size - new_h) / 2;

  FrameTensor canvas(canvas_size, canvas_size, frame.channels, fill);
  for (int y = 0; y < new_h; ++y)
    for (int x = 0; x < new_w; ++x)
      for (int c = 0; c < frame.channels; ++c)
        canvas.at(y + pad_y, x + pad_x, c) = resized.at(y, x, c);

  if (map) {
    map->scale = scale;
    map->pad_x = pad_x;
    map->pad_y = pad_y;
  }
  return canvas;
}

}  // namespace gundet
