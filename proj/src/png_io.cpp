#include "gundet/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "gundet/errors.hpp"

namespace gundet {

namespace {

const uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_u32(const uint8_t* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void write_chunk(std::vector<uint8_t>& out, const char type[4],
                 const std::vector<uint8_t>& data) {
  put_u32(out, static_cast<uint32_t>(data.size()));
  const size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uLong crc =
      crc32(0L, out.data() + crc_start, static_cast<uInt>(4 + data.size()));
  put_u32(out, static_cast<uint32_t>(crc));
}

int color_type_for(int channels) {
  switch (channels) {
    case 1: return 0;
    case 3: return 2;
    case 4: return 6;
    default: throw ValidationError("png: unsupported channel count");
  }
}

int channels_for(int color_type) {
  switch (color_type) {
    case 0: return 1;
    case 2: return 3;
    case 6: return 4;
    default: throw DataError("png: unsupported color type");
  }
}

uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a);
  const int pb = std::abs(p - b);
  const int pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<uint8_t>(a);
  if (pb <= pc) return static_cast<uint8_t>(b);
  return static_cast<uint8_t>(c);
}

}  // namespace

void png_write(const std::string& path, const PngImage& img,
               const std::vector<std::pair<std::string, std::string>>& text_chunks) {
  if (img.width <= 0 || img.height <= 0)
    throw ValidationError("png: empty image");
  const int ct = color_type_for(img.channels);
  const size_t row = static_cast<size_t>(img.width) * img.channels;
  if (img.pixels.size() != row * img.height)
    throw ValidationError("png: pixel buffer size mismatch");

  std::vector<uint8_t> raw;
  raw.reserve((row + 1) * img.height);
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), img.pixels.begin() + y * row,
               img.pixels.begin() + (y + 1) * row);
  }

  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(),
                static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw DataError("png: compression failed");
  comp.resize(comp_len);

  std::vector<uint8_t> out(kSignature, kSignature + 8);
  std::vector<uint8_t> ihdr;
  put_u32(ihdr, static_cast<uint32_t>(img.width));
  put_u32(ihdr, static_cast<uint32_t>(img.height));
  ihdr.push_back(8);                         // bit depth
  ihdr.push_back(static_cast<uint8_t>(ct));  // color type
  ihdr.push_back(0);                         // compression
  ihdr.push_back(0);                         // filter
  ihdr.push_back(0);                         // interlace
  write_chunk(out, "IHDR", ihdr);
  for (const auto& [key, value] : text_chunks) {
    std::vector<uint8_t> t(key.begin(), key.end());
    t.push_back(0);
    t.insert(t.end(), value.begin(), value.end());
    write_chunk(out, "tEXt", t);
  }
  write_chunk(out, "IDAT", comp);
  write_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("png: cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("png: write failed: " + path);
}

namespace {

struct ChunkScan {
  int width = 0, height = 0, channels = 0;
  std::vector<uint8_t> idat;
};

ChunkScan scan_png(const std::string& path, bool need_data) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("png: cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
    throw DataError("png: bad signature: " + path);

  ChunkScan scan;
  size_t pos = 8;
  bool saw_ihdr = false;
  while (pos + 8 <= bytes.size()) {
    const uint32_t len = get_u32(&bytes[pos]);
    if (pos + 12 + len > bytes.size()) throw DataError("png: truncated chunk");
    const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
    const uint8_t* data = &bytes[pos + 8];
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw DataError("png: bad IHDR");
      scan.width = static_cast<int>(get_u32(data));
      scan.height = static_cast<int>(get_u32(data + 4));
      if (data[8] != 8) throw DataError("png: only 8-bit depth supported");
      scan.channels = channels_for(data[9]);
      if (data[12] != 0) throw DataError("png: interlace not supported");
      saw_ihdr = true;
      if (!need_data) return scan;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      scan.idat.insert(scan.idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (!saw_ihdr) throw DataError("png: missing IHDR");
  return scan;
}

}  // namespace

PngImage png_read_header(const std::string& path) {
  const ChunkScan scan = scan_png(path, false);
  PngImage img;
  img.width = scan.width;
  img.height = scan.height;
  img.channels = scan.channels;
  return img;
}

PngImage png_read(const std::string& path) {
  const ChunkScan scan = scan_png(path, true);
  if (scan.width <= 0 || scan.height <= 0)
    throw DataError("png: bad dimensions");

  const size_t bpp = static_cast<size_t>(scan.channels);
  const size_t row = static_cast<size_t>(scan.width) * bpp;
  const size_t raw_len = (row + 1) * scan.height;
  std::vector<uint8_t> raw(raw_len);
  uLongf dest_len = static_cast<uLongf>(raw_len);
  if (uncompress(raw.data(), &dest_len, scan.idat.data(),
                 static_cast<uLong>(scan.idat.size())) != Z_OK ||
      dest_len != raw_len)
    throw DataError("png: decompression failed: " + path);

  PngImage img;
  img.width = scan.width;
  img.height = scan.height;
  img.channels = scan.channels;
  img.pixels.resize(row * scan.height);

  std::vector<uint8_t> prev(row, 0);
  for (int y = 0; y < scan.height; ++y) {
    const uint8_t filter = raw[(row + 1) * y];
    const uint8_t* src = &raw[(row + 1) * y + 1];
    uint8_t* dst = &img.pixels[row * y];
    for (size_t x = 0; x < row; ++x) {
      const int a = x >= bpp ? dst[x - bpp] : 0;
      const int b = prev[x];
      const int c = x >= bpp ? prev[x - bpp] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw DataError("png: unknown filter type");
      }
      dst[x] = static_cast<uint8_t>(v & 0xff);
    }
    std::memcpy(prev.data(), dst, row);
  }
  return img;
}

}  // namespace gundet
