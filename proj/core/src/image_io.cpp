#include "semclip/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "semclip/errors.hpp"

namespace semclip {

namespace {

void write_pgm_bytes(const std::string& path, const Tensor& image,
                     const std::vector<unsigned char>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path);
  f << "P5\n" << image.extent(1) << " " << image.extent(0) << "\n255\n";
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed: " + path);
}

int read_pgm_token(std::istream& in) {
  // Skips whitespace and # comments between header tokens.
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value = 0;
  if (!(in >> value)) throw DataError("malformed PGM header");
  return value;
}

std::vector<unsigned char> read_pgm_bytes(const std::string& path, int* height, int* width) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open image: " + path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || m1 != '5') throw DataError("not a binary PGM (P5): " + path);
  const int w = read_pgm_token(f);
  const int h = read_pgm_token(f);
  const int maxval = read_pgm_token(f);
  if (w < 1 || h < 1 || maxval != 255) throw DataError("unsupported PGM header: " + path);
  f.get();  // single whitespace before raster
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h);
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (f.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw DataError("truncated PGM raster: " + path);
  }
  *height = h;
  *width = w;
  return bytes;
}

}  // namespace

void write_pgm(const std::string& path, const Tensor& image) {
  if (image.rank() != 2) throw std::invalid_argument("write_pgm expects a rank-2 tensor");
  std::vector<unsigned char> bytes(static_cast<std::size_t>(image.size()));
  for (std::int64_t i = 0; i < image.size(); ++i) {
    const float v = std::clamp(image.data()[i], 0.0f, 1.0f);
    bytes[static_cast<std::size_t>(i)] =
        static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  write_pgm_bytes(path, image, bytes);
}

Tensor read_pgm(const std::string& path) {
  int h = 0, w = 0;
  const auto bytes = read_pgm_bytes(path, &h, &w);
  Tensor out({h, w});
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    out.data()[i] = static_cast<float>(bytes[i]) / 255.0f;
  }
  return out;
}

void write_mask_pgm(const std::string& path, const Tensor& mask) {
  if (mask.rank() != 2) throw std::invalid_argument("write_mask_pgm expects a rank-2 tensor");
  std::vector<unsigned char> bytes(static_cast<std::size_t>(mask.size()));
  for (std::int64_t i = 0; i < mask.size(); ++i) {
    bytes[static_cast<std::size_t>(i)] = mask.data()[i] > 0.5f ? 255 : 0;
  }
  write_pgm_bytes(path, mask, bytes);
}

Tensor read_mask_pgm(const std::string& path) {
  int h = 0, w = 0;
  const auto bytes = read_pgm_bytes(path, &h, &w);
  Tensor out({h, w});
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    out.data()[i] = bytes[i] > 127 ? 1.0f : 0.0f;
  }
  return out;
}

void write_raw_map(const std::string& path, const Tensor& map) {
  if (map.rank() != 2) throw std::invalid_argument("write_raw_map expects a rank-2 tensor");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path);
  auto put_u32 = [&](std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    f.write(b, 4);
  };
  put_u32(static_cast<std::uint32_t>(map.extent(0)));
  put_u32(static_cast<std::uint32_t>(map.extent(1)));
  for (std::int64_t i = 0; i < map.size(); ++i) {
    put_u32(std::bit_cast<std::uint32_t>(map.data()[i]));
  }
  if (!f) throw DataError("write failed: " + path);
}

Tensor read_raw_map(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open map: " + path);
  auto get_u32 = [&]() {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw DataError("truncated map file: " + path);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  };
  const int h = static_cast<int>(get_u32());
  const int w = static_cast<int>(get_u32());
  if (h < 1 || w < 1) throw DataError("invalid map dimensions: " + path);
  Tensor out({h, w});
  for (std::int64_t i = 0; i < out.size(); ++i) {
    out.data()[i] = std::bit_cast<float>(get_u32());
  }
  return out;
}

void write_heatmap_pgm(const std::string& path, const Tensor& map) {
  if (map.rank() != 2) throw std::invalid_argument("write_heatmap_pgm expects a rank-2 tensor");
  float lo = map.data()[0], hi = map.data()[0];
  for (std::int64_t i = 0; i < map.size(); ++i) {
    lo = std::min(lo, map.data()[i]);
    hi = std::max(hi, map.data()[i]);
  }
  const float range = hi - lo;
  Tensor scaled(map.shape());
  for (std::int64_t i = 0; i < map.size(); ++i) {
    scaled.data()[i] = range > 0 ? (map.data()[i] - lo) / range : 0.0f;
  }
  write_pgm(path, scaled);
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path);
  f << "file,label,seed\n";
  for (const auto& e : entries) {
    f << e.file << "," << e.label << "," << e.seed << "\n";
  }
  if (!f) throw DataError("write failed: " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open manifest: " + path);
  std::string line;
  if (!std::getline(f, line) || line != "file,label,seed") {
    throw DataError("manifest missing `file,label,seed` header: " + path);
  }
  std::vector<ManifestEntry> entries;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    ManifestEntry e;
    std::string seed;
    if (!std::getline(ss, e.file, ',') || !std::getline(ss, e.label, ',') ||
        !std::getline(ss, seed)) {
      throw DataError("malformed manifest row: " + line);
    }
    e.seed = std::stoull(seed);
    entries.push_back(std::move(e));
  }
  return entries;
}

std::string mask_path_for(const std::string& image_path) {
  const auto dot = image_path.rfind(".pgm");
  if (dot == std::string::npos || dot + 4 != image_path.size()) {
    return image_path + ".mask.pgm";
  }
  return image_path.substr(0, dot) + ".mask.pgm";
}

}  // namespace semclip
