#include "semclip/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "semclip/errors.hpp"
#include "semclip/rng.hpp"

namespace semclip {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'M', 'C'};

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& buf) : buf_(buf) {}

  std::uint64_t remaining() const { return buf_.size() - pos_; }
  std::uint64_t pos() const { return pos_; }

  void need(std::uint64_t n) {
    if (remaining() < n) throw CheckpointError("truncated checkpoint file");
  }

  std::uint16_t u16() { return static_cast<std::uint16_t>(uint_le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint_le(4)); }
  std::uint64_t u64() { return uint_le(8); }
  std::uint8_t u8() { return static_cast<std::uint8_t>(uint_le(1)); }

  std::string bytes(std::uint64_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  std::uint64_t uint_le(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::uint64_t>(n);
    return v;
  }

  const std::string& buf_;
  std::uint64_t pos_ = 0;
};

void append_f32_le(std::string& out, const float* data, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) {
    put_u32(out, std::bit_cast<std::uint32_t>(data[i]));
  }
}

std::uint64_t hash_mix(std::uint64_t h, const char* bytes, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(bytes[i]);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));

  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : ckpt.tensors) {
    if (name.size() > 0xffff) throw DataError("tensor name too long: " + name);
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.append(name);
    out.push_back(static_cast<char>(tensor.rank()));
    for (int e : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    put_u64(out, offset);
    offset += static_cast<std::uint64_t>(tensor.size()) * 4;
  }

  put_u32(out, static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [key, value] : ckpt.metadata) {
    if (key.size() > 0xffff || value.size() > 0xffff) {
      throw DataError("metadata entry too long: " + key);
    }
    put_u16(out, static_cast<std::uint16_t>(key.size()));
    out.append(key);
    put_u16(out, static_cast<std::uint16_t>(value.size()));
    out.append(value);
  }

  for (const auto& [name, tensor] : ckpt.tensors) {
    (void)name;
    append_f32_le(out, tensor.data(), tensor.size());
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open checkpoint for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader r(buf);
  if (r.bytes(4) != std::string(kMagic, 4)) throw CheckpointError("bad magic: not a checkpoint file");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("version mismatch: got " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }

  struct Entry {
    std::string name;
    std::vector<int> shape;
    std::uint64_t offset;
    std::uint64_t elems;
  };
  const std::uint32_t count = r.u32();
  std::vector<Entry> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = r.bytes(r.u16());
    const int rank = r.u8();
    if (rank < 1 || rank > 4) throw CheckpointError("corrupt entry rank for " + e.name);
    e.elems = 1;
    for (int a = 0; a < rank; ++a) {
      std::uint32_t ext = r.u32();
      if (ext == 0) throw CheckpointError("corrupt extent for " + e.name);
      e.shape.push_back(static_cast<int>(ext));
      e.elems *= ext;
    }
    e.offset = r.u64();
    entries.push_back(std::move(e));
  }

  Checkpoint ckpt;
  const std::uint32_t meta_count = r.u32();
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    std::string key = r.bytes(r.u16());
    std::string value = r.bytes(r.u16());
    ckpt.metadata.emplace(std::move(key), std::move(value));
  }

  const std::uint64_t payload_size = r.remaining();
  const std::string payload = r.bytes(payload_size);
  for (auto& e : entries) {
    const std::uint64_t bytes = e.elems * 4;
    if (e.offset + bytes > payload_size) {
      throw CheckpointError("truncated payload for tensor " + e.name);
    }
    std::vector<float> data(e.elems);
    for (std::uint64_t i = 0; i < e.elems; ++i) {
      std::uint32_t v = 0;
      for (int b = 0; b < 4; ++b) {
        v |= static_cast<std::uint32_t>(
                 static_cast<unsigned char>(payload[e.offset + i * 4 + b]))
             << (8 * b);
      }
      data[i] = std::bit_cast<float>(v);
    }
    if (!ckpt.tensors.emplace(e.name, Tensor(e.shape, std::move(data))).second) {
      throw CheckpointError("duplicate tensor name " + e.name);
    }
  }
  return ckpt;
}

std::uint64_t checksum_tensors(const Checkpoint& ckpt, const std::vector<std::string>& excluded) {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& [name, tensor] : ckpt.tensors) {
    if (std::find(excluded.begin(), excluded.end(), name) != excluded.end()) continue;
    h = hash_mix(h, name.data(), name.size());
    std::string payload;
    append_f32_le(payload, tensor.data(), tensor.size());
    h = hash_mix(h, payload.data(), payload.size());
  }
  return h;
}

SurgeryReport surgery_copy_qkv_to_vvv(Checkpoint& ckpt) {
  auto meta_int = [&](const std::string& key) {
    auto it = ckpt.metadata.find(key);
    if (it == ckpt.metadata.end()) {
      throw CheckpointError("surgery requires metadata key " + key);
    }
    return std::stoi(it->second);
  };
  const int m = meta_int("vit.blocks");
  const int n = meta_int("vit.layers_per_block");

  static const char* kSuffixes[] = {"w_v", "b_v", "w_out", "b_out"};

  std::vector<std::string> destinations;
  for (int j = 1; j <= m; ++j) {
    for (int i = 1; i <= n; ++i) {
      for (const char* s : kSuffixes) {
        destinations.push_back("vision.block" + std::to_string(j) + ".layer" + std::to_string(i) +
                               ".vvv." + s);
      }
    }
  }

  SurgeryReport report;
  report.checksum_before = checksum_tensors(ckpt, destinations);
  for (int j = 1; j <= m; ++j) {
    for (int i = 1; i <= n; ++i) {
      const std::string block =
          "vision.block" + std::to_string(j) + ".layer" + std::to_string(i);
      for (const char* s : kSuffixes) {
        const std::string src = block + ".qkv." + s;
        auto it = ckpt.tensors.find(src);
        if (it == ckpt.tensors.end()) {
          throw CheckpointError("surgery: missing tensor " + src + " for " + block);
        }
        const std::string dst = block + ".vvv." + s;
        ckpt.tensors[dst] = it->second;
        report.copied_pairs.emplace_back(src, dst);
      }
    }
  }
  report.checksum_after = checksum_tensors(ckpt, destinations);
  return report;
}

}  // namespace semclip
