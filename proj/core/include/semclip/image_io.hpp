#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semclip/tensor.hpp"

namespace semclip {

/// Binary PGM (P5, maxval 255); values are clamped to [0,1] and scaled.
void write_pgm(const std::string& path, const Tensor& image);
Tensor read_pgm(const std::string& path);

/// Mask helpers: 0/255 on disk, {0,1} in memory (threshold 127).
void write_mask_pgm(const std::string& path, const Tensor& mask);
Tensor read_mask_pgm(const std::string& path);

/// Raw float map: u32 height, u32 width (little-endian), then row-major
/// f32 little-endian data.
void write_raw_map(const std::string& path, const Tensor& map);
Tensor read_raw_map(const std::string& path);

/// Min-max normalized 8-bit heatmap.
void write_heatmap_pgm(const std::string& path, const Tensor& map);

struct ManifestEntry {
  std::string file;   // image path relative to the manifest directory
  std::string label;  // class name
  std::uint64_t seed = 0;
};

/// manifest.csv with header `file,label,seed`.
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

/// `<image>.mask.pgm` convention: q0003.pgm -> q0003.mask.pgm.
std::string mask_path_for(const std::string& image_path);

}  // namespace semclip
