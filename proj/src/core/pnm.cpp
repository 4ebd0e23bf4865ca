#include "recseg/core/pnm.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "recseg/core/error.hpp"

namespace recseg {

namespace {

void write_bytes(const std::string& path, const std::string& header,
                 const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path);
}

struct PnmHeader {
  std::string magic;
  int width = 0;
  int height = 0;
  int maxval = 0;
};

// Reads the header tokens, skipping '#' comments, then positions the stream
// at the first raster byte.
PnmHeader read_header(std::istream& in, const std::string& path) {
  PnmHeader h;
  auto next_token = [&](std::string& tok) {
    for (;;) {
      int c = in.get();
      if (c == EOF) throw DataError("truncated PNM header: " + path);
      if (c == '#') {
        while (c != EOF && c != '\n') c = in.get();
        continue;
      }
      if (!std::isspace(c)) {
        tok.clear();
        while (c != EOF && !std::isspace(c)) {
          tok.push_back(static_cast<char>(c));
          c = in.get();
        }
        return;
      }
    }
  };
  std::string tok;
  next_token(tok);
  h.magic = tok;
  next_token(tok);
  h.width = std::stoi(tok);
  next_token(tok);
  h.height = std::stoi(tok);
  next_token(tok);
  h.maxval = std::stoi(tok);
  if (h.width <= 0 || h.height <= 0)
    throw DataError("bad PNM dimensions: " + path);
  if (h.maxval != 255) throw DataError("unsupported PNM maxval: " + path);
  return h;
}

std::vector<std::uint8_t> read_raster(std::istream& in, size_t n,
                                      const std::string& path) {
  std::vector<std::uint8_t> bytes(n);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n)
    throw DataError("truncated PNM raster: " + path);
  return bytes;
}

std::string p5_header(int w, int h) {
  std::ostringstream os;
  os << "P5\n" << w << " " << h << "\n255\n";
  return os.str();
}

}  // namespace

float quantize255(float v) {
  float q = std::nearbyint(v * 255.0f);
  if (q < 0.0f) q = 0.0f;
  if (q > 255.0f) q = 255.0f;
  return q / 255.0f;
}

void write_mask_pgm(const std::string& path, const ClassMask& mask) {
  write_bytes(path, p5_header(mask.width, mask.height), mask.labels);
}

ClassMask read_mask_pgm(const std::string& path, int classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  PnmHeader h = read_header(in, path);
  if (h.magic != "P5") throw DataError("expected P5 mask: " + path);
  ClassMask mask;
  mask.width = h.width;
  mask.height = h.height;
  mask.classes = classes;
  mask.labels = read_raster(in, mask.pixel_count(), path);
  for (auto v : mask.labels)
    if (v >= classes)
      throw DataError("mask byte exceeds class count: " + path);
  return mask;
}

void write_instance_pgm(const std::string& path, const InstanceMask& mask) {
  write_bytes(path, p5_header(mask.width, mask.height), mask.bits);
}

InstanceMask read_instance_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  PnmHeader h = read_header(in, path);
  if (h.magic != "P5") throw DataError("expected P5 mask: " + path);
  InstanceMask mask;
  mask.width = h.width;
  mask.height = h.height;
  mask.bits = read_raster(in, mask.pixel_count(), path);
  for (auto& v : mask.bits) v = v ? 1 : 0;
  return mask;
}

void write_image_pnm(const std::string& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3)
    throw DataError("image must have 1 or 3 channels: " + path);
  const size_t n = image.pixel_count();
  std::vector<std::uint8_t> bytes(n * image.channels);
  for (size_t p = 0; p < n; ++p)
    for (int c = 0; c < image.channels; ++c) {
      float v = image.data[static_cast<size_t>(c) * n + p] * 255.0f;
      v = std::nearbyint(v);
      if (v < 0.0f) v = 0.0f;
      if (v > 255.0f) v = 255.0f;
      bytes[p * image.channels + c] = static_cast<std::uint8_t>(v);
    }
  std::ostringstream os;
  os << (image.channels == 1 ? "P5" : "P6") << "\n"
     << image.width << " " << image.height << "\n255\n";
  write_bytes(path, os.str(), bytes);
}

Image read_image_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  PnmHeader h = read_header(in, path);
  int channels;
  if (h.magic == "P5")
    channels = 1;
  else if (h.magic == "P6")
    channels = 3;
  else
    throw DataError("expected P5 or P6 image: " + path);
  Image img = Image::zeros(h.height, h.width, channels);
  const size_t n = img.pixel_count();
  auto bytes = read_raster(in, n * channels, path);
  for (size_t p = 0; p < n; ++p)
    for (int c = 0; c < channels; ++c)
      img.data[static_cast<size_t>(c) * n + p] =
          static_cast<float>(bytes[p * channels + c]) / 255.0f;
  return img;
}

}  // namespace recseg
