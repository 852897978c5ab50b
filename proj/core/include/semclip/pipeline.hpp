#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "semclip/checkpoint.hpp"
#include "semclip/classification.hpp"
#include "semclip/finetune.hpp"
#include "semclip/metrics.hpp"
#include "semclip/segmentation.hpp"
#include "semclip/synth.hpp"
#include "semclip/text_encoder.hpp"
#include "semclip/vit.hpp"

namespace semclip {

struct RunConfig {
  std::string checkpoint;
  std::string out_checkpoint;  // finetune output; empty = update in place
  std::string prompts;         // prompt library JSON; empty = built-in
  std::string data_dir;        // episode directory with support/ and query/
  std::string out_dir = ".";

  VitConfig vit;
  TextEncoderConfig text;
  std::optional<float> tau;    // unset = checkpoint metadata, then 0.07
  std::optional<float> alpha;  // unset = checkpoint metadata, then 0.8
  TrainConfig train;

  int n_way = 7;
  int k_shot = 10;
  int m_query = 200;
  std::uint64_t seed = 42;
  int threads = 0;  // 0 = logical cores
  bool banner = false;
  bool save_maps = true;

  bool no_transform = false;
  bool generic_prompts = false;
  bool last_layer_only = false;
  bool ps_only = false;
  bool pc_only = false;
  PsSource ps_source = PsSource::patches;

  void validate() const;
};

/// `key = value` lines with `#` comments; unknown keys are config errors.
void apply_config_file(RunConfig& cfg, const std::string& path);
void apply_ablation_flag(RunConfig& cfg, const std::string& name);

// Checkpoint contents resolved into runtime structures.
struct ModelBundle {
  VitWeights vit;
  TextEncoderWeights text;
  TransformationLayer tl;
  ClassifierHead head;
  TextEmbeddingSet embeddings;
  std::vector<std::string> classes;
  float tau = kDefaultTau;
  float alpha = 0.8f;
  std::uint64_t seed = 0;
  bool finetuned = false;
  std::vector<int> levels_used;  // empty = all
};

ModelBundle load_model(const Checkpoint& ckpt, const RunConfig& cfg);

struct InferenceResult {
  Tensor pixel_map;  // H x W anomaly scores in [0,1]
  Tensor anomaly_grid;
  ClassProbabilities probs;
};

InferenceResult run_inference(const ModelBundle& model, const Tensor& image,
                              const RunConfig& cfg);

void cmd_gen(const RunConfig& cfg);
SurgeryReport cmd_init(const RunConfig& cfg);
SurgeryReport cmd_surgery(const RunConfig& cfg);

struct FinetuneResult {
  std::vector<double> transform_curve;
  std::vector<double> head_curve;
};
FinetuneResult cmd_finetune(const RunConfig& cfg);

MetricsReport cmd_evaluate(const RunConfig& cfg);

void cmd_segment(const RunConfig& cfg, const std::string& image_path,
                 const std::string& out_map);
void cmd_classify(const RunConfig& cfg, const std::vector<std::string>& image_paths,
                  const std::string& out_csv);

}  // namespace semclip
