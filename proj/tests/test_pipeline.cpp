#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "semclip/errors.hpp"
#include "semclip/image_io.hpp"
#include "semclip/pipeline.hpp"

namespace fs = std::filesystem;

using semclip::MetricsReport;
using semclip::RunConfig;

namespace {

// Small model and episode so every command runs in well under a second.
RunConfig small_config(const fs::path& dir) {
  RunConfig cfg;
  cfg.vit.image_size = 64;
  cfg.vit.patch_size = 16;  // 16 tokens
  cfg.vit.width = 32;
  cfg.vit.heads = 4;
  cfg.vit.blocks = 2;
  cfg.vit.layers_per_block = 1;
  cfg.text.vocab = 512;
  cfg.text.width = 32;
  cfg.text.depth = 1;
  cfg.text.heads = 4;
  cfg.text.joint_dim = 32;
  cfg.train.epochs = 30;
  cfg.n_way = 3;
  cfg.k_shot = 2;
  cfg.m_query = 24;
  cfg.seed = 11;
  cfg.threads = 2;
  cfg.save_maps = false;
  cfg.checkpoint = (dir / "model.ckpt").string();
  cfg.data_dir = (dir / "episode").string();
  cfg.out_dir = (dir / "out").string();
  return cfg;
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config file parsing and overrides") {
  TempDir dir("semclip_cfg_test");
  const fs::path cfg_path = dir.path / "run.cfg";
  {
    std::ofstream f(cfg_path);
    f << "# comment line\n";
    f << "seed = 123\n";
    f << "tau = 0.1   # trailing comment\n";
    f << "alpha=0.5\n";
    f << "ablate = last_layer_only, generic_prompts\n";
    f << "k_shot = 4\n";
  }
  RunConfig cfg;
  semclip::apply_config_file(cfg, cfg_path.string());
  CHECK(cfg.seed == 123);
  CHECK(cfg.tau.value() == doctest::Approx(0.1));
  CHECK(cfg.alpha.value() == doctest::Approx(0.5));
  CHECK(cfg.last_layer_only);
  CHECK(cfg.generic_prompts);
  CHECK(cfg.k_shot == 4);

  {
    std::ofstream f(cfg_path);
    f << "unknown_key = 3\n";
  }
  RunConfig cfg2;
  CHECK_THROWS_AS(semclip::apply_config_file(cfg2, cfg_path.string()), semclip::ConfigError);

  {
    std::ofstream f(cfg_path);
    f << "seed 123\n";
  }
  CHECK_THROWS_AS(semclip::apply_config_file(cfg2, cfg_path.string()), semclip::ConfigError);

  RunConfig bad;
  bad.ps_only = true;
  bad.pc_only = true;
  CHECK_THROWS_AS(bad.validate(), semclip::ConfigError);
}

TEST_CASE("full pipeline: gen, init, finetune, evaluate") {
  TempDir dir("semclip_pipeline_test");
  RunConfig cfg = small_config(dir.path);

  RunConfig gen_cfg = cfg;
  gen_cfg.out_dir = cfg.data_dir;
  semclip::cmd_gen(gen_cfg);
  CHECK(fs::exists(fs::path(cfg.data_dir) / "support" / "manifest.csv"));
  CHECK(fs::exists(fs::path(cfg.data_dir) / "query" / "q0000.pgm"));
  CHECK(fs::exists(fs::path(cfg.data_dir) / "query" / "q0000.mask.pgm"));

  const auto report = semclip::cmd_init(cfg);
  CHECK(report.copied_pairs.size() == 2u * 1u * 4u);
  CHECK(report.checksum_before == report.checksum_after);

  // Surgery is idempotent via the CLI path too.
  const auto again = semclip::cmd_surgery(cfg);
  CHECK(again.copied_pairs.size() == report.copied_pairs.size());

  // Evaluating an untuned checkpoint without ablations is refused.
  CHECK_THROWS_AS(semclip::cmd_evaluate(cfg), semclip::DataError);

  const auto ft = semclip::cmd_finetune(cfg);
  CHECK(ft.transform_curve.size() == 30);
  CHECK(ft.head_curve.size() == 30);
  CHECK(ft.transform_curve.back() < ft.transform_curve.front());
  CHECK(fs::exists(fs::path(cfg.out_dir) / "transform_loss.csv"));
  CHECK(fs::exists(fs::path(cfg.out_dir) / "head_loss.csv"));
  {
    std::ifstream f(fs::path(cfg.out_dir) / "head_loss.csv");
    std::string header;
    std::getline(f, header);
    CHECK(header == "epoch,loss");
  }

  const MetricsReport metrics = semclip::cmd_evaluate(cfg);
  CHECK(metrics.iauroc >= 0.0);
  CHECK(metrics.iauroc <= 1.0);
  CHECK(metrics.pauroc >= 0.0);
  CHECK(metrics.confusion.size() == 3);

  // metrics.json carries exactly the contract keys, in order.
  const std::string json = read_file(fs::path(cfg.out_dir) / "metrics.json");
  for (const char* key : {"\"iauroc\"", "\"pauroc\"", "\"f1max\"", "\"accuracy\"",
                          "\"precision\"", "\"recall\"", "\"f1\"", "\"confusion\""}) {
    CHECK(json.find(key) != std::string::npos);
  }
  CHECK(json.find("\"iauroc\"") < json.find("\"pauroc\""));
  CHECK(json.find("\"f1\"") < json.find("\"confusion\""));

  // Table-ordered CSV rows.
  const std::string seg_csv = read_file(fs::path(cfg.out_dir) / "segmentation_metrics.csv");
  CHECK(seg_csv.rfind("iauroc,pauroc,f1max\n", 0) == 0);
  const std::string cls_csv = read_file(fs::path(cfg.out_dir) / "classification_metrics.csv");
  CHECK(cls_csv.rfind("accuracy,precision,recall,f1\n", 0) == 0);

  // Per-image CSV: header carries class columns in embedding order.
  const std::string per_image = read_file(fs::path(cfg.out_dir) / "classification.csv");
  CHECK(per_image.rfind("image_id,predicted_class,p_good,p_bridge,p_residue\n", 0) == 0);

  // Determinism: a rerun writes byte-identical metrics.
  RunConfig rerun = cfg;
  rerun.out_dir = (dir.path / "out2").string();
  semclip::cmd_evaluate(rerun);
  CHECK(read_file(fs::path(cfg.out_dir) / "metrics.json") ==
        read_file(fs::path(rerun.out_dir) / "metrics.json"));

  // Evaluate with maps on: heatmap and raw map files appear.
  RunConfig with_maps = cfg;
  with_maps.out_dir = (dir.path / "out_maps").string();
  with_maps.save_maps = true;
  semclip::cmd_evaluate(with_maps);
  CHECK(fs::exists(fs::path(with_maps.out_dir) / "maps" / "q0000.map"));
  CHECK(fs::exists(fs::path(with_maps.out_dir) / "maps" / "q0000.heat.pgm"));
}

TEST_CASE("ablation flags change evaluation consistently") {
  TempDir dir("semclip_ablation_test");
  RunConfig cfg = small_config(dir.path);

  RunConfig gen_cfg = cfg;
  gen_cfg.out_dir = cfg.data_dir;
  semclip::cmd_gen(gen_cfg);
  semclip::cmd_init(cfg);
  semclip::cmd_finetune(cfg);

  const MetricsReport base = semclip::cmd_evaluate(cfg);

  // pc_only is exactly alpha = 1.
  RunConfig pc = cfg;
  pc.pc_only = true;
  pc.out_dir = (dir.path / "out_pc").string();
  const MetricsReport pc_report = semclip::cmd_evaluate(pc);
  RunConfig alpha1 = cfg;
  alpha1.alpha = 1.0f;
  alpha1.out_dir = (dir.path / "out_a1").string();
  const MetricsReport alpha1_report = semclip::cmd_evaluate(alpha1);
  CHECK(pc_report.accuracy == alpha1_report.accuracy);
  CHECK(pc_report.macro_f1 == alpha1_report.macro_f1);

  // ps_only is exactly alpha = 0.
  RunConfig ps = cfg;
  ps.ps_only = true;
  ps.out_dir = (dir.path / "out_ps").string();
  const MetricsReport ps_report = semclip::cmd_evaluate(ps);
  RunConfig alpha0 = cfg;
  alpha0.alpha = 0.0f;
  alpha0.out_dir = (dir.path / "out_a0").string();
  const MetricsReport alpha0_report = semclip::cmd_evaluate(alpha0);
  CHECK(ps_report.accuracy == alpha0_report.accuracy);

  // Segmentation metrics ignore the fusion weight.
  CHECK(pc_report.pauroc == base.pauroc);
  CHECK(ps_report.pauroc == base.pauroc);

  // no_transform works on an untuned checkpoint and changes the maps.
  RunConfig raw = cfg;
  raw.no_transform = true;
  raw.out_dir = (dir.path / "out_raw").string();
  const MetricsReport raw_report = semclip::cmd_evaluate(raw);
  CHECK(raw_report.pauroc != base.pauroc);

  // last_layer_only needs a matching head shape.
  RunConfig last = cfg;
  last.last_layer_only = true;
  last.out_dir = (dir.path / "out_last").string();
  CHECK_THROWS_AS(semclip::cmd_evaluate(last), std::invalid_argument);

  // Fine-tuning under the same flag trains a single-level head.
  RunConfig last_ft = cfg;
  last_ft.last_layer_only = true;
  last_ft.out_checkpoint = (dir.path / "model_last.ckpt").string();
  last_ft.out_dir = (dir.path / "ft_last").string();
  semclip::cmd_finetune(last_ft);
  last.checkpoint = last_ft.out_checkpoint;
  const MetricsReport last_report = semclip::cmd_evaluate(last);
  CHECK(last_report.confusion.size() == 3);
}

TEST_CASE("segment and classify commands write their artifacts") {
  TempDir dir("semclip_single_test");
  RunConfig cfg = small_config(dir.path);
  RunConfig gen_cfg = cfg;
  gen_cfg.out_dir = cfg.data_dir;
  semclip::cmd_gen(gen_cfg);
  semclip::cmd_init(cfg);
  semclip::cmd_finetune(cfg);

  const std::string image = (fs::path(cfg.data_dir) / "query" / "q0000.pgm").string();
  const std::string map_path = (dir.path / "one.map").string();
  semclip::cmd_segment(cfg, image, map_path);
  CHECK(fs::exists(map_path));
  CHECK(fs::exists(map_path + ".pgm"));
  const semclip::Tensor map = semclip::read_raw_map(map_path);
  CHECK(map.extent(0) == cfg.vit.image_size);
  for (std::int64_t i = 0; i < map.size(); ++i) {
    CHECK(map.data()[i] >= 0.0f);
    CHECK(map.data()[i] <= 1.0f);
  }

  const std::string csv_path = (dir.path / "cls.csv").string();
  semclip::cmd_classify(cfg, {image}, csv_path);
  const std::string csv = read_file(csv_path);
  CHECK(csv.rfind("image_id,predicted_class,p_good,p_bridge,p_residue\n", 0) == 0);
  CHECK(csv.find("q0000,") != std::string::npos);
}

TEST_CASE("evaluate rejects a class-list mismatch") {
  TempDir dir("semclip_mismatch_test");
  RunConfig cfg = small_config(dir.path);
  RunConfig gen_cfg = cfg;
  gen_cfg.out_dir = cfg.data_dir;
  semclip::cmd_gen(gen_cfg);
  semclip::cmd_init(cfg);
  semclip::cmd_finetune(cfg);

  // A wider episode holds labels the 3-way checkpoint does not know.
  RunConfig gen5 = cfg;
  gen5.n_way = 5;
  gen5.out_dir = (dir.path / "episode5").string();
  semclip::cmd_gen(gen5);
  RunConfig eval5 = cfg;
  eval5.data_dir = gen5.out_dir;
  CHECK_THROWS_AS(semclip::cmd_evaluate(eval5), semclip::DataError);
}
