#ifndef GAZELT_IMAGE_HPP
#define GAZELT_IMAGE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "gazelt/error.hpp"

namespace gazelt {

/// Channel-major (C×H×W) image with intensities in [0, 1].
struct Image {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;

  float& at(std::size_t c, std::size_t y, std::size_t x) { return pixels[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return pixels[(c * height + y) * width + x]; }
};

/// Writes binary PGM (1 channel) or PPM (3 channels), 8 bits per sample.
inline void write_pnm(const std::string& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw ValidationError("only 1- or 3-channel images can be written, got " + std::to_string(img.channels));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os << (img.channels == 1 ? "P5" : "P6") << '\n' << img.width << ' ' << img.height << "\n255\n";
  std::vector<std::uint8_t> buf(img.channels * img.height * img.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) {
        const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
        buf[(y * img.width + x) * img.channels + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline Image read_pnm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open image '" + path + "'");
  std::string magic;
  is >> magic;
  if (magic != "P5" && magic != "P6") throw DataError("'" + path + "' is not a binary PGM/PPM");
  auto next_int = [&]() {
    is >> std::ws;
    while (is.peek() == '#') {
      std::string line;
      std::getline(is, line);
      is >> std::ws;
    }
    long v = -1;
    is >> v;
    if (!is || v <= 0) throw DataError("bad PNM header in '" + path + "'");
    return static_cast<std::size_t>(v);
  };
  Image img;
  img.channels = magic == "P5" ? 1 : 3;
  img.width = next_int();
  img.height = next_int();
  const auto maxval = next_int();
  if (maxval != 255) throw DataError("only 8-bit PNM is supported: '" + path + "'");
  is.get();
  std::vector<std::uint8_t> buf(img.channels * img.height * img.width);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(is.gcount()) != buf.size()) throw DataError("truncated image '" + path + "'");
  img.pixels.resize(buf.size());
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c)
        img.at(c, y, x) = static_cast<float>(buf[(y * img.width + x) * img.channels + c]) / 255.0f;
  return img;
}

}  // namespace gazelt

#endif  // GAZELT_IMAGE_HPP
