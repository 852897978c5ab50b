// Command-line front end for the few-shot SEM defect classification and
// segmentation pipeline: dataset generation, model init with V-V weight
// surgery, few-shot fine-tuning, inference, and metric evaluation.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "semclip/errors.hpp"
#include "semclip/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CliState {
  semclip::RunConfig cfg;
  std::string config_file;
  std::string ps_source;
  std::vector<std::string> ablations;
  double tau = -1.0;
  double alpha = -1.0;
};

void add_common_flags(CLI::App* cmd, CliState& state) {
  cmd->add_option("--config", state.config_file, "key = value config file");
  cmd->add_option("--seed", state.cfg.seed, "master seed");
  cmd->add_option("--threads", state.cfg.threads, "worker threads (0 = logical cores)");
  cmd->add_option("--prompts", state.cfg.prompts, "prompt library JSON path");
  cmd->add_option("--tau", state.tau, "similarity softmax temperature");
  cmd->add_option("--alpha", state.alpha, "head/similarity fusion weight");
  cmd->add_option("--ablate", state.ablations, "ablation flag (repeatable)");
}

bool provided(CLI::App* cmd, const std::string& name) {
  auto* opt = cmd->get_option_no_throw(name);
  return opt != nullptr && opt->count() > 0;
}

// Precedence: defaults < config file < explicit flags.
void finalize(CliState& state, CLI::App* cmd) {
  if (!state.config_file.empty()) {
    semclip::RunConfig base;
    semclip::apply_config_file(base, state.config_file);
    semclip::RunConfig& c = state.cfg;

    c.vit = base.vit;
    c.text = base.text;
    c.train.seed = base.train.seed;
    c.train.seg_loss_weight = base.train.seg_loss_weight;
    if (!provided(cmd, "--seed")) c.seed = base.seed;
    if (!provided(cmd, "--threads")) c.threads = base.threads;
    if (!provided(cmd, "--prompts")) c.prompts = base.prompts;
    if (!provided(cmd, "--tau")) c.tau = base.tau;
    if (!provided(cmd, "--alpha")) c.alpha = base.alpha;
    if (!provided(cmd, "--n-way")) c.n_way = base.n_way;
    if (!provided(cmd, "--k-shot")) c.k_shot = base.k_shot;
    if (!provided(cmd, "--m-query")) c.m_query = base.m_query;
    if (!provided(cmd, "--lr")) c.train.lr = base.train.lr;
    if (!provided(cmd, "--epochs")) c.train.epochs = base.train.epochs;
    if (!provided(cmd, "--banner")) c.banner = base.banner;
    if (!provided(cmd, "--no-maps")) c.save_maps = base.save_maps;
    if (!provided(cmd, "--ps-source")) c.ps_source = base.ps_source;
    if (!provided(cmd, "--checkpoint") && !base.checkpoint.empty()) c.checkpoint = base.checkpoint;
    if (!provided(cmd, "--data") && !base.data_dir.empty()) c.data_dir = base.data_dir;
    if (!provided(cmd, "--out") && base.out_dir != semclip::RunConfig{}.out_dir) {
      c.out_dir = base.out_dir;
    }
    c.no_transform |= base.no_transform;
    c.generic_prompts |= base.generic_prompts;
    c.last_layer_only |= base.last_layer_only;
    c.ps_only |= base.ps_only;
    c.pc_only |= base.pc_only;
  }
  if (state.tau >= 0) state.cfg.tau = static_cast<float>(state.tau);
  if (state.alpha >= 0) state.cfg.alpha = static_cast<float>(state.alpha);
  if (state.ps_source == "patches") {
    state.cfg.ps_source = semclip::PsSource::patches;
  } else if (state.ps_source == "cls") {
    state.cfg.ps_source = semclip::PsSource::cls;
  } else if (!state.ps_source.empty()) {
    throw semclip::ConfigError("ps-source must be patches or cls");
  }
  for (const auto& flag : state.ablations) semclip::apply_ablation_flag(state.cfg, flag);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"few-shot SEM defect classification and segmentation"};
  app.require_subcommand(1);

  CliState state;
  std::string image_path;
  std::string out_map = "anomaly.map";
  std::string out_csv;
  std::vector<std::string> classify_images;

  auto* gen = app.add_subcommand("gen", "generate a synthetic N-way K-shot episode");
  gen->add_option("--n,--n-way", state.cfg.n_way, "number of classes including good");
  gen->add_option("--k,--k-shot", state.cfg.k_shot, "support shots per class");
  gen->add_option("--m,--m-query", state.cfg.m_query, "query set size (>= 10k)");
  gen->add_option("--out", state.cfg.out_dir, "output directory");
  gen->add_flag("--banner", state.cfg.banner, "overlay annotation banner strips");
  add_common_flags(gen, state);

  auto* init = app.add_subcommand("init", "write a seeded checkpoint with V-V surgery applied");
  init->add_option("--checkpoint", state.cfg.checkpoint, "output checkpoint path");
  init->add_option("--n,--n-way", state.cfg.n_way, "number of classes including good");
  add_common_flags(init, state);

  auto* surgery = app.add_subcommand("surgery", "re-copy QKV projections into the V-V branch");
  surgery->add_option("--checkpoint", state.cfg.checkpoint, "checkpoint path");
  surgery->add_option("--out-checkpoint", state.cfg.out_checkpoint,
                      "output path (default: in place)");
  add_common_flags(surgery, state);

  auto* finetune = app.add_subcommand("finetune", "fit the transformation layer and head");
  finetune->add_option("--checkpoint", state.cfg.checkpoint, "checkpoint path");
  finetune->add_option("--data", state.cfg.data_dir, "episode directory");
  finetune->add_option("--out", state.cfg.out_dir, "artifact directory");
  finetune->add_option("--out-checkpoint", state.cfg.out_checkpoint,
                       "updated checkpoint path (default: in place)");
  finetune->add_option("--lr", state.cfg.train.lr, "Adam learning rate");
  finetune->add_option("--epochs", state.cfg.train.epochs, "training epochs");
  finetune->add_option("--k-shot", state.cfg.k_shot, "expected shots per class");
  add_common_flags(finetune, state);

  auto* evaluate = app.add_subcommand("evaluate", "run the query set and report metrics");
  evaluate->add_option("--checkpoint", state.cfg.checkpoint, "checkpoint path");
  evaluate->add_option("--data", state.cfg.data_dir, "episode directory");
  evaluate->add_option("--out", state.cfg.out_dir, "report directory");
  evaluate->add_flag("!--no-maps", state.cfg.save_maps, "skip per-image heatmaps");
  evaluate->add_option("--ps-source", state.ps_source, "similarity source: patches|cls");
  add_common_flags(evaluate, state);

  auto* segment = app.add_subcommand("segment", "write the anomaly map for one image");
  segment->add_option("--checkpoint", state.cfg.checkpoint, "checkpoint path");
  segment->add_option("--image", image_path, "input PGM image")->required();
  segment->add_option("--out-map", out_map, "raw map path (heatmap at <path>.pgm)");
  add_common_flags(segment, state);

  auto* classify = app.add_subcommand("classify", "classify one or more images to CSV");
  classify->add_option("--checkpoint", state.cfg.checkpoint, "checkpoint path");
  classify->add_option("--image", classify_images, "input PGM image(s)")->required();
  classify->add_option("--out", out_csv, "CSV path (default: stdout)");
  add_common_flags(classify, state);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    CLI::App* active = app.get_subcommands().front();
    finalize(state, active);

    if (gen->parsed()) {
      semclip::cmd_gen(state.cfg);
      std::printf("episode written to %s (support %d x %d, query %d)\n",
                  state.cfg.out_dir.c_str(), state.cfg.n_way, state.cfg.k_shot,
                  state.cfg.m_query);
    } else if (init->parsed()) {
      const auto report = semclip::cmd_init(state.cfg);
      std::printf("checkpoint %s written; surgery copied %zu tensors\n",
                  state.cfg.checkpoint.c_str(), report.copied_pairs.size());
    } else if (surgery->parsed()) {
      const auto report = semclip::cmd_surgery(state.cfg);
      std::printf("surgery copied %zu tensors (untouched checksum %016llx)\n",
                  report.copied_pairs.size(),
                  static_cast<unsigned long long>(report.checksum_after));
    } else if (finetune->parsed()) {
      const auto result = semclip::cmd_finetune(state.cfg);
      if (!result.transform_curve.empty()) {
        std::printf("transform loss %.6f -> %.6f\n", result.transform_curve.front(),
                    result.transform_curve.back());
      } else {
        std::printf("transform training skipped (no_transform)\n");
      }
      std::printf("head loss %.6f -> %.6f\n", result.head_curve.front(),
                  result.head_curve.back());
    } else if (evaluate->parsed()) {
      const auto report = semclip::cmd_evaluate(state.cfg);
      std::printf("iAUROC %.4f  pAUROC %.4f  F1-max %.4f\n", report.iauroc, report.pauroc,
                  report.f1max);
      std::printf("accuracy %.4f  precision %.4f  recall %.4f  F1 %.4f\n", report.accuracy,
                  report.macro_precision, report.macro_recall, report.macro_f1);
    } else if (segment->parsed()) {
      semclip::cmd_segment(state.cfg, image_path, out_map);
      std::printf("map written to %s (+.pgm heatmap)\n", out_map.c_str());
    } else if (classify->parsed()) {
      semclip::cmd_classify(state.cfg, classify_images, out_csv);
    }
  } catch (const semclip::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const semclip::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const semclip::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitOk;
}
