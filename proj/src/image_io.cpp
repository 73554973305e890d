#include "casgnn/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "casgnn/errors.hpp"

namespace casgnn {

namespace {

std::uint8_t quantize(float v) {
  const float clamped = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

void write_bytes(const std::string& path, const std::string& header,
                 const std::vector<std::uint8_t>& pixels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("write failed for " + path);
}

struct PnmReader {
  std::string path;
  std::vector<std::uint8_t> bytes;
  std::size_t pos = 0;

  explicit PnmReader(const std::string& p) : path(p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p + " for reading");
    bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(path + ": " + what + " at byte " + std::to_string(pos));
  }

  void expect_magic(char kind) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != kind) {
      fail(std::string("expected magic P") + kind);
    }
    pos = 2;
  }

  // Whitespace separator; '#' starts a comment running to end of line.
  void skip_space() {
    bool saw = false;
    while (pos < bytes.size()) {
      const char ch = static_cast<char>(bytes[pos]);
      if (ch == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        saw = true;
      } else if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') {
        ++pos;
        saw = true;
      } else {
        break;
      }
    }
    if (!saw) fail("expected whitespace");
  }

  int read_int() {
    if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9') fail("expected integer");
    long value = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      value = value * 10 + (bytes[pos] - '0');
      if (value > 1 << 20) fail("integer out of range");
      ++pos;
    }
    return static_cast<int>(value);
  }

  // Header ends with exactly one whitespace byte before the raster.
  void expect_single_space() {
    if (pos >= bytes.size()) fail("truncated header");
    const char ch = static_cast<char>(bytes[pos]);
    if (ch != ' ' && ch != '\t' && ch != '\r' && ch != '\n') fail("expected raster separator");
    ++pos;
  }

  const std::uint8_t* raster(std::size_t expected) {
    if (bytes.size() - pos < expected) {
      pos = bytes.size();
      fail("raster truncated, need " + std::to_string(expected) + " bytes");
    }
    return bytes.data() + pos;
  }
};

}  // namespace

void write_ppm(const std::string& path, const TensorF& rgb) {
  const Shape& s = rgb.shape();
  if (s.n != 1 || s.c != 3) throw DimensionError("write_ppm expects (1,3,H,W), got " + s.str());
  std::string header = "P6\n" + std::to_string(s.w) + " " + std::to_string(s.h) + "\n255\n";
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(s.h) * s.w * 3);
  std::size_t i = 0;
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      pixels[i++] = quantize(rgb.at(0, 0, y, x));
      pixels[i++] = quantize(rgb.at(0, 1, y, x));
      pixels[i++] = quantize(rgb.at(0, 2, y, x));
    }
  }
  write_bytes(path, header, pixels);
}

void write_pgm(const std::string& path, const TensorF& gray) {
  const Shape& s = gray.shape();
  if (s.n != 1 || s.c != 1) throw DimensionError("write_pgm expects (1,1,H,W), got " + s.str());
  std::string header = "P5\n" + std::to_string(s.w) + " " + std::to_string(s.h) + "\n255\n";
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(s.h) * s.w);
  std::size_t i = 0;
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) pixels[i++] = quantize(gray.at(0, 0, y, x));
  }
  write_bytes(path, header, pixels);
}

namespace {

TensorF read_pnm(const std::string& path, char kind, int channels) {
  PnmReader reader(path);
  reader.expect_magic(kind);
  reader.skip_space();
  const int w = reader.read_int();
  reader.skip_space();
  const int h = reader.read_int();
  reader.skip_space();
  const int maxval = reader.read_int();
  if (w < 1 || h < 1) reader.fail("invalid dimensions");
  if (maxval != 255) reader.fail("unsupported maxval " + std::to_string(maxval));
  reader.expect_single_space();
  const std::size_t count = static_cast<std::size_t>(h) * w * channels;
  const std::uint8_t* data = reader.raster(count);

  TensorF out = TensorF::zeros({1, channels, h, w});
  std::size_t i = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        out.at(0, c, y, x) = static_cast<float>(data[i++]) / 255.0f;
      }
    }
  }
  return out;
}

}  // namespace

TensorF read_ppm(const std::string& path) { return read_pnm(path, '6', 3); }

TensorF read_pgm(const std::string& path) { return read_pnm(path, '5', 1); }

}  // namespace casgnn
