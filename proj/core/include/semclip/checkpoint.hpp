#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "semclip/tensor.hpp"

namespace semclip {

// On-disk layout (all integers little-endian):
//   magic "SEMC", u32 version = 1, u32 entry count,
//   per entry: u16 name length, name bytes, u8 rank, u32 extents..., u64 offset,
//   u32 metadata count, per pair: u16 key length, key, u16 value length, value,
//   raw f32 payload.
// Entries are serialized in name order with contiguous offsets, so saving
// the same map twice produces byte-identical files.
struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> metadata;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct SurgeryReport {
  std::vector<std::pair<std::string, std::string>> copied_pairs;  // (source, destination)
  std::uint64_t checksum_before = 0;  // over all tensors outside the VVV name set
  std::uint64_t checksum_after = 0;
};

/// Builds the V-V attention branch parameters by copying the value and
/// output projections of every QKV attention layer to the corresponding
/// `vvv` names. Requires `vit.blocks` / `vit.layers_per_block` metadata;
/// idempotent by construction.
SurgeryReport surgery_copy_qkv_to_vvv(Checkpoint& ckpt);

/// FNV-1a over names and payload bytes of every tensor whose name is not
/// in `excluded`, in name order.
std::uint64_t checksum_tensors(const Checkpoint& ckpt,
                               const std::vector<std::string>& excluded = {});

}  // namespace semclip
