#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "semclip/checkpoint.hpp"
#include "semclip/errors.hpp"
#include "semclip/vit.hpp"
#include "test_util.hpp"

using semclip::Checkpoint;
using semclip::Tensor;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Checkpoint random_checkpoint(std::uint64_t seed, int tensors) {
  Checkpoint ckpt;
  semclip::Rng rng(seed);
  for (int i = 0; i < tensors; ++i) {
    std::vector<int> shape;
    const int rank = rng.uniform_int(1, 4);
    for (int a = 0; a < rank; ++a) shape.push_back(rng.uniform_int(1, 5));
    ckpt.tensors["tensor." + std::to_string(i)] =
        testutil::random_tensor(shape, seed * 97 + static_cast<std::uint64_t>(i));
  }
  ckpt.metadata["seed"] = std::to_string(seed);
  ckpt.metadata["note"] = "generated";
  return ckpt;
}

}  // namespace

TEST_CASE("save/load roundtrip is bitwise") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const std::string path = temp_path("ckpt_roundtrip.bin");
    Checkpoint original = random_checkpoint(seed, 5);
    semclip::save_checkpoint(original, path);
    Checkpoint loaded = semclip::load_checkpoint(path);

    REQUIRE(loaded.tensors.size() == original.tensors.size());
    for (const auto& [name, tensor] : original.tensors) {
      REQUIRE(loaded.tensors.count(name) == 1);
      CHECK(loaded.tensors.at(name) == tensor);
    }
    CHECK(loaded.metadata == original.metadata);
    std::remove(path.c_str());
  }
}

TEST_CASE("empty tensor map produces a valid file") {
  const std::string path = temp_path("ckpt_empty.bin");
  Checkpoint empty;
  empty.metadata["kind"] = "empty";
  semclip::save_checkpoint(empty, path);
  Checkpoint loaded = semclip::load_checkpoint(path);
  CHECK(loaded.tensors.empty());
  CHECK(loaded.metadata.at("kind") == "empty");
  std::remove(path.c_str());
}

TEST_CASE("two saves of the same map are byte-identical") {
  const std::string p1 = temp_path("ckpt_det1.bin");
  const std::string p2 = temp_path("ckpt_det2.bin");
  Checkpoint ckpt = random_checkpoint(42, 7);
  semclip::save_checkpoint(ckpt, p1);
  semclip::save_checkpoint(ckpt, p2);
  CHECK(read_file(p1) == read_file(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("load failures are distinct errors") {
  const std::string path = temp_path("ckpt_bad.bin");

  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "NOPExxxxxxxxxxxxxxxx";
  }
  CHECK_THROWS_WITH_AS(semclip::load_checkpoint(path), doctest::Contains("bad magic"),
                       semclip::CheckpointError);

  Checkpoint ckpt = random_checkpoint(9, 3);
  semclip::save_checkpoint(ckpt, path);
  {
    // Bump the version field (bytes 4..7).
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(4);
    const char v2[4] = {2, 0, 0, 0};
    f.write(v2, 4);
  }
  CHECK_THROWS_WITH_AS(semclip::load_checkpoint(path), doctest::Contains("version mismatch"),
                       semclip::CheckpointError);

  semclip::save_checkpoint(ckpt, path);
  {
    const std::string full = read_file(path);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(full.data(), static_cast<std::streamsize>(full.size() - 10));
  }
  CHECK_THROWS_WITH_AS(semclip::load_checkpoint(path), doctest::Contains("truncated"),
                       semclip::CheckpointError);

  std::remove(path.c_str());
}

TEST_CASE("loaded entry count matches header") {
  const std::string path = temp_path("ckpt_count.bin");
  Checkpoint ckpt = random_checkpoint(17, 6);
  semclip::save_checkpoint(ckpt, path);
  CHECK(semclip::load_checkpoint(path).tensors.size() == 6);
  std::remove(path.c_str());
}

TEST_CASE("surgery copies value/output projections bitwise and is idempotent") {
  semclip::VitConfig cfg;
  cfg.image_size = 16;
  cfg.patch_size = 8;
  cfg.width = 8;
  cfg.heads = 2;
  cfg.blocks = 2;
  cfg.layers_per_block = 2;

  Checkpoint ckpt;
  ckpt.tensors = semclip::VitWeights::seeded(cfg, 7).to_map();
  ckpt.metadata["vit.blocks"] = "2";
  ckpt.metadata["vit.layers_per_block"] = "2";

  semclip::SurgeryReport report = semclip::surgery_copy_qkv_to_vvv(ckpt);
  CHECK(report.copied_pairs.size() == 2u * 2u * 4u);
  CHECK(report.checksum_before == report.checksum_after);

  for (const auto& [src, dst] : report.copied_pairs) {
    CHECK(ckpt.tensors.at(src) == ckpt.tensors.at(dst));
  }

  // Idempotence: a second pass changes nothing anywhere.
  Checkpoint again = ckpt;
  semclip::surgery_copy_qkv_to_vvv(again);
  CHECK(semclip::checksum_tensors(again) == semclip::checksum_tensors(ckpt));

  // Tensors outside the VVV set keep their bytes.
  std::vector<std::string> dst_names;
  for (const auto& [src, dst] : report.copied_pairs) {
    (void)src;
    dst_names.push_back(dst);
  }
  Checkpoint pre;
  pre.tensors = semclip::VitWeights::seeded(cfg, 7).to_map();
  CHECK(semclip::checksum_tensors(pre, dst_names) ==
        semclip::checksum_tensors(ckpt, dst_names));
}

TEST_CASE("surgery reports the block of a missing source tensor") {
  semclip::VitConfig cfg;
  cfg.image_size = 16;
  cfg.patch_size = 8;
  cfg.width = 8;
  cfg.heads = 2;
  cfg.blocks = 2;
  cfg.layers_per_block = 1;

  Checkpoint ckpt;
  ckpt.tensors = semclip::VitWeights::seeded(cfg, 3).to_map();
  ckpt.metadata["vit.blocks"] = "2";
  ckpt.metadata["vit.layers_per_block"] = "1";
  ckpt.tensors.erase("vision.block2.layer1.qkv.w_out");

  CHECK_THROWS_WITH_AS(semclip::surgery_copy_qkv_to_vvv(ckpt),
                       doctest::Contains("vision.block2.layer1"), semclip::CheckpointError);

  Checkpoint no_meta;
  no_meta.tensors = ckpt.tensors;
  CHECK_THROWS_AS(semclip::surgery_copy_qkv_to_vvv(no_meta), semclip::CheckpointError);
}
