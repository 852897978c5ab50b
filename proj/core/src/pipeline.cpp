#include "semclip/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "semclip/errors.hpp"
#include "semclip/image_io.hpp"
#include "semclip/parallel.hpp"
#include "semclip/rng.hpp"

namespace fs = std::filesystem;

namespace semclip {

namespace {

std::string fmt_float(double v) {
  std::ostringstream ss;
  ss << std::setprecision(9) << v;
  return ss.str();
}

std::string fmt_fixed(double v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(6) << v;
  return ss.str();
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.push_back(sep);
    out += parts[i];
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  return parts;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

int meta_int(const Checkpoint& ckpt, const std::string& key) {
  auto it = ckpt.metadata.find(key);
  if (it == ckpt.metadata.end()) throw CheckpointError("checkpoint metadata missing " + key);
  return std::stoi(it->second);
}

float meta_float(const Checkpoint& ckpt, const std::string& key, float fallback) {
  auto it = ckpt.metadata.find(key);
  return it == ckpt.metadata.end() ? fallback : std::stof(it->second);
}

const Tensor& ckpt_tensor(const Checkpoint& ckpt, const std::string& name) {
  auto it = ckpt.tensors.find(name);
  if (it == ckpt.tensors.end()) throw CheckpointError("checkpoint missing tensor " + name);
  return it->second;
}

PromptLibrary resolve_prompts(const RunConfig& cfg) {
  if (cfg.generic_prompts) return PromptLibrary::generic_library();
  if (!cfg.prompts.empty()) return PromptLibrary::from_json_file(cfg.prompts);
  return PromptLibrary::default_library();
}

std::vector<std::string> classes_for(int n_way) {
  const auto& canon = canonical_classes();
  if (n_way < 2 || n_way > static_cast<int>(canon.size())) {
    throw ConfigError("n_way must be in [2, " + std::to_string(canon.size()) + "]");
  }
  return {canon.begin(), canon.begin() + n_way};
}

int class_index(const std::vector<std::string>& classes, const std::string& name) {
  const auto it = std::find(classes.begin(), classes.end(), name);
  if (it == classes.end()) {
    throw DataError("label '" + name + "' not in checkpoint class list {" + join(classes, ',') +
                    "}");
  }
  return static_cast<int>(it - classes.begin());
}

struct LoadedSet {
  std::vector<Tensor> images;
  std::vector<Tensor> masks;
  std::vector<int> labels;
  std::vector<std::string> ids;  // file stems
};

LoadedSet load_set(const std::string& dir, const std::vector<std::string>& classes) {
  LoadedSet set;
  const auto entries = read_manifest(dir + "/manifest.csv");
  if (entries.empty()) throw DataError("empty manifest in " + dir);
  for (const auto& e : entries) {
    const std::string img_path = dir + "/" + e.file;
    set.images.push_back(read_pgm(img_path));
    set.masks.push_back(read_mask_pgm(mask_path_for(img_path)));
    set.labels.push_back(class_index(classes, e.label));
    std::string stem = e.file;
    if (const auto dot = stem.rfind(".pgm"); dot != std::string::npos) stem = stem.substr(0, dot);
    set.ids.push_back(stem);
  }
  return set;
}

void write_loss_csv(const std::string& path, const std::vector<double>& curve) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot write loss curve: " + path);
  f << "epoch,loss\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    f << (i + 1) << "," << fmt_float(curve[i]) << "\n";
  }
}

}  // namespace

void RunConfig::validate() const {
  vit.validate();
  if (tau.has_value() && *tau <= 0.0f) throw ConfigError("tau must be positive");
  if (alpha.has_value() && (*alpha < 0.0f || *alpha > 1.0f)) {
    throw ConfigError("alpha must be in [0,1]");
  }
  if (ps_only && pc_only) throw ConfigError("ps_only and pc_only are mutually exclusive");
  if (n_way < 2 || k_shot < 1) throw ConfigError("need n_way >= 2 and k_shot >= 1");
  if (threads < 0) throw ConfigError("threads must be >= 0");
  train.validate();
}

void apply_ablation_flag(RunConfig& cfg, const std::string& name) {
  if (name == "no_transform") {
    cfg.no_transform = true;
  } else if (name == "generic_prompts") {
    cfg.generic_prompts = true;
  } else if (name == "last_layer_only") {
    cfg.last_layer_only = true;
  } else if (name == "ps_only") {
    cfg.ps_only = true;
  } else if (name == "pc_only") {
    cfg.pc_only = true;
  } else {
    throw ConfigError("unknown ablation flag: " + name);
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "checkpoint") cfg.checkpoint = value;
      else if (key == "prompts") cfg.prompts = value;
      else if (key == "data_dir") cfg.data_dir = value;
      else if (key == "out_dir") cfg.out_dir = value;
      else if (key == "image_size") cfg.vit.image_size = std::stoi(value);
      else if (key == "patch_size") cfg.vit.patch_size = std::stoi(value);
      else if (key == "width") cfg.vit.width = std::stoi(value);
      else if (key == "heads") cfg.vit.heads = std::stoi(value);
      else if (key == "blocks") cfg.vit.blocks = std::stoi(value);
      else if (key == "layers_per_block") cfg.vit.layers_per_block = std::stoi(value);
      else if (key == "vocab") cfg.text.vocab = std::stoi(value);
      else if (key == "text_width") cfg.text.width = std::stoi(value);
      else if (key == "text_depth") cfg.text.depth = std::stoi(value);
      else if (key == "text_heads") cfg.text.heads = std::stoi(value);
      else if (key == "joint_dim") cfg.text.joint_dim = std::stoi(value);
      else if (key == "tau") cfg.tau = std::stof(value);
      else if (key == "alpha") cfg.alpha = std::stof(value);
      else if (key == "lr") cfg.train.lr = std::stof(value);
      else if (key == "epochs") cfg.train.epochs = std::stoi(value);
      else if (key == "seg_loss_weight") cfg.train.seg_loss_weight = std::stof(value);
      else if (key == "n_way") cfg.n_way = std::stoi(value);
      else if (key == "k_shot") cfg.k_shot = std::stoi(value);
      else if (key == "m_query") cfg.m_query = std::stoi(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "threads") cfg.threads = std::stoi(value);
      else if (key == "banner") cfg.banner = value == "1" || value == "true";
      else if (key == "save_maps") cfg.save_maps = value == "1" || value == "true";
      else if (key == "ps_source") {
        if (value == "patches") cfg.ps_source = PsSource::patches;
        else if (value == "cls") cfg.ps_source = PsSource::cls;
        else throw ConfigError("ps_source must be patches or cls");
      } else if (key == "ablate") {
        for (const auto& flag : split(value, ',')) apply_ablation_flag(cfg, trim(flag));
      } else {
        throw ConfigError(path + ":" + std::to_string(line_no) + ": unknown key " + key);
      }
    } catch (const std::invalid_argument&) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": bad value for " + key);
    } catch (const std::out_of_range&) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": bad value for " + key);
    }
  }
}

ModelBundle load_model(const Checkpoint& ckpt, const RunConfig& cfg) {
  ModelBundle model;

  VitConfig vit_cfg;
  vit_cfg.image_size = meta_int(ckpt, "vit.image_size");
  vit_cfg.patch_size = meta_int(ckpt, "vit.patch_size");
  vit_cfg.width = meta_int(ckpt, "vit.width");
  vit_cfg.heads = meta_int(ckpt, "vit.heads");
  vit_cfg.blocks = meta_int(ckpt, "vit.blocks");
  vit_cfg.layers_per_block = meta_int(ckpt, "vit.layers_per_block");
  model.vit = VitWeights::from_map(ckpt.tensors, vit_cfg);

  TextEncoderConfig text_cfg;
  text_cfg.vocab = meta_int(ckpt, "text.vocab");
  text_cfg.width = meta_int(ckpt, "text.width");
  text_cfg.depth = meta_int(ckpt, "text.depth");
  text_cfg.heads = meta_int(ckpt, "text.heads");
  text_cfg.joint_dim = meta_int(ckpt, "text.joint_dim");
  model.text = TextEncoderWeights::from_map(ckpt.tensors, text_cfg);

  auto classes_it = ckpt.metadata.find("classes");
  if (classes_it == ckpt.metadata.end()) throw CheckpointError("checkpoint metadata missing classes");
  model.classes = split(classes_it->second, ',');
  if (model.classes.size() < 2) throw CheckpointError("checkpoint class list too short");

  model.seed = std::stoull(ckpt.metadata.count("seed") ? ckpt.metadata.at("seed") : "0");
  model.tau = cfg.tau.value_or(meta_float(ckpt, "tau", kDefaultTau));
  model.alpha = cfg.alpha.value_or(meta_float(ckpt, "alpha", 0.8f));
  if (model.tau <= 0.0f) throw ConfigError("tau must be positive");
  model.finetuned =
      ckpt.metadata.count("finetuned") && ckpt.metadata.at("finetuned") == "1";

  const int m = vit_cfg.blocks;
  const int C = vit_cfg.width;
  const int D = text_cfg.joint_dim;
  if (cfg.no_transform) {
    // The untrained, identity-initialized transform from the model seed.
    model.tl = TransformationLayer::seeded(m, C, D, model.seed);
  } else {
    for (int j = 1; j <= m; ++j) {
      model.tl.w.push_back(ckpt_tensor(ckpt, "seg.transform." + std::to_string(j) + ".w"));
      model.tl.b.push_back(ckpt_tensor(ckpt, "seg.transform." + std::to_string(j) + ".b"));
    }
  }
  model.head.w = ckpt_tensor(ckpt, "cls.head.w");
  model.head.b = ckpt_tensor(ckpt, "cls.head.b");

  if (cfg.last_layer_only) model.levels_used = {m - 1};

  const PromptLibrary lib = resolve_prompts(cfg);
  model.embeddings = build_class_embeddings(lib, model.classes, model.text);
  return model;
}

InferenceResult run_inference(const ModelBundle& model, const Tensor& image,
                              const RunConfig& cfg) {
  const int m = model.vit.cfg.blocks;
  const int levels = model.levels_used.empty() ? m : static_cast<int>(model.levels_used.size());

  EncodedImage enc = encode_image(image, model.vit);
  std::vector<Tensor> f_primes = apply_transformation(enc, model.tl, model.levels_used);
  DefectMaps a_f = defect_map_F(f_primes, model.embeddings, model.tau);
  DefectMaps a_v = defect_map_V(enc, model.embeddings, model.tau, model.levels_used);
  FusedMap fused = fuse_maps(a_f.fused, a_v.fused, model.embeddings.good_index(), levels);

  InferenceResult result;
  result.anomaly_grid = fused.anomaly_grid;
  result.pixel_map = upsample_to_pixels(fused.anomaly_grid, model.vit.cfg.image_size);

  SimilarityOptions opts;
  opts.tau = model.tau;
  opts.source = cfg.ps_source;
  opts.levels_used = model.levels_used;
  Tensor p_s = similarity_probability(enc, model.tl, model.embeddings, opts);

  std::vector<Tensor> cls_tokens;
  if (model.levels_used.empty()) {
    cls_tokens = enc.cls;
  } else {
    for (int j : model.levels_used) cls_tokens.push_back(enc.cls[static_cast<std::size_t>(j)]);
  }
  Tensor p_c = head_probability(cls_tokens, model.head);

  FusionConfig fusion;
  fusion.alpha = cfg.ps_only ? 0.0f : cfg.pc_only ? 1.0f : model.alpha;
  result.probs = fuse_probability(p_s, p_c, fusion);
  return result;
}

void cmd_gen(const RunConfig& cfg) {
  cfg.validate();
  Episode ep = sample_episode(cfg.n_way, cfg.k_shot, cfg.m_query, cfg.seed, cfg.banner);

  auto write_split = [&](const std::string& name, const std::vector<SemSample>& samples,
                         char prefix) {
    const fs::path dir = fs::path(cfg.out_dir) / name;
    fs::create_directories(dir);
    std::vector<ManifestEntry> manifest;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      std::ostringstream base;
      base << prefix << std::setw(4) << std::setfill('0') << i << ".pgm";
      const std::string file = base.str();
      write_pgm((dir / file).string(), samples[i].image);
      write_mask_pgm(mask_path_for((dir / file).string()), samples[i].mask);
      manifest.push_back(
          {file, ep.classes[static_cast<std::size_t>(samples[i].label)], samples[i].seed});
    }
    write_manifest((dir / "manifest.csv").string(), manifest);
  };
  write_split("support", ep.support, 's');
  write_split("query", ep.query, 'q');
}

SurgeryReport cmd_init(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.checkpoint.empty()) throw ConfigError("init requires a checkpoint path");
  const std::vector<std::string> classes = classes_for(cfg.n_way);
  const int m = cfg.vit.blocks;
  const int C = cfg.vit.width;
  const int D = cfg.text.joint_dim;
  const int N = static_cast<int>(classes.size());

  Checkpoint ckpt;
  {
    VitWeights vit = VitWeights::seeded(cfg.vit, derive_seed(cfg.seed, "vision"));
    for (auto& [name, tensor] : vit.to_map()) ckpt.tensors[name] = std::move(tensor);
  }
  {
    TextEncoderWeights text = TextEncoderWeights::seeded(cfg.text, derive_seed(cfg.seed, "text"));
    for (auto& [name, tensor] : text.to_map()) ckpt.tensors[name] = std::move(tensor);
  }
  {
    TransformationLayer tl = TransformationLayer::seeded(m, C, D, cfg.seed);
    for (int j = 0; j < m; ++j) {
      ckpt.tensors["seg.transform." + std::to_string(j + 1) + ".w"] = tl.w[static_cast<std::size_t>(j)];
      ckpt.tensors["seg.transform." + std::to_string(j + 1) + ".b"] = tl.b[static_cast<std::size_t>(j)];
    }
  }
  ckpt.tensors["cls.head.w"] = Tensor({m * C, N});
  ckpt.tensors["cls.head.b"] = Tensor({N});

  ckpt.metadata["vit.image_size"] = std::to_string(cfg.vit.image_size);
  ckpt.metadata["vit.patch_size"] = std::to_string(cfg.vit.patch_size);
  ckpt.metadata["vit.width"] = std::to_string(cfg.vit.width);
  ckpt.metadata["vit.heads"] = std::to_string(cfg.vit.heads);
  ckpt.metadata["vit.blocks"] = std::to_string(cfg.vit.blocks);
  ckpt.metadata["vit.layers_per_block"] = std::to_string(cfg.vit.layers_per_block);
  ckpt.metadata["text.vocab"] = std::to_string(cfg.text.vocab);
  ckpt.metadata["text.width"] = std::to_string(cfg.text.width);
  ckpt.metadata["text.depth"] = std::to_string(cfg.text.depth);
  ckpt.metadata["text.heads"] = std::to_string(cfg.text.heads);
  ckpt.metadata["text.joint_dim"] = std::to_string(cfg.text.joint_dim);
  ckpt.metadata["tau"] = fmt_float(cfg.tau.value_or(kDefaultTau));
  ckpt.metadata["alpha"] = fmt_float(cfg.alpha.value_or(0.8f));
  ckpt.metadata["seed"] = std::to_string(cfg.seed);
  ckpt.metadata["classes"] = join(classes, ',');
  ckpt.metadata["finetuned"] = "0";

  SurgeryReport report = surgery_copy_qkv_to_vvv(ckpt);
  save_checkpoint(ckpt, cfg.checkpoint);
  return report;
}

SurgeryReport cmd_surgery(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("surgery requires a checkpoint path");
  Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
  SurgeryReport report = surgery_copy_qkv_to_vvv(ckpt);
  const std::string out = cfg.out_checkpoint.empty() ? cfg.checkpoint : cfg.out_checkpoint;
  save_checkpoint(ckpt, out);
  return report;
}

FinetuneResult cmd_finetune(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.checkpoint.empty()) throw ConfigError("finetune requires a checkpoint path");
  if (cfg.data_dir.empty()) throw ConfigError("finetune requires a data directory");
  set_num_threads(cfg.threads);

  Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
  // Embeddings and the transform come from the stored tensors here, not
  // the ablation overrides; no_transform only skips training below.
  RunConfig load_cfg = cfg;
  load_cfg.no_transform = false;
  ModelBundle model = load_model(ckpt, load_cfg);

  const LoadedSet support = load_set(cfg.data_dir + "/support", model.classes);
  Episode episode;
  episode.classes = model.classes;
  for (std::size_t i = 0; i < support.images.size(); ++i) {
    SemSample s;
    s.image = support.images[i];
    s.mask = support.masks[i];
    s.label = support.labels[i];
    episode.support.push_back(std::move(s));
  }

  FeatureCache cache = build_cache(episode, model.vit);

  FinetuneResult result;
  if (!cfg.no_transform) {
    result.transform_curve = train_transformation(cache, model.embeddings, model.tl, cfg.train,
                                                  model.tau, model.levels_used);
  }

  const int C = model.vit.cfg.width;
  const int N = static_cast<int>(model.classes.size());
  const int head_in = model.levels_used.empty() ? model.vit.cfg.blocks * C
                                                : static_cast<int>(model.levels_used.size()) * C;
  if (model.head.w.extent(0) != head_in) {
    model.head.w = Tensor({head_in, N});
    model.head.b = Tensor({N});
  }
  result.head_curve = train_head(cache, model.head, cfg.train, model.levels_used);

  for (int j = 0; j < model.tl.levels(); ++j) {
    ckpt.tensors["seg.transform." + std::to_string(j + 1) + ".w"] = model.tl.w[static_cast<std::size_t>(j)];
    ckpt.tensors["seg.transform." + std::to_string(j + 1) + ".b"] = model.tl.b[static_cast<std::size_t>(j)];
  }
  ckpt.tensors["cls.head.w"] = model.head.w;
  ckpt.tensors["cls.head.b"] = model.head.b;
  ckpt.metadata["finetuned"] = "1";
  ckpt.metadata["finetune.no_transform"] = cfg.no_transform ? "1" : "0";
  ckpt.metadata["finetune.generic_prompts"] = cfg.generic_prompts ? "1" : "0";
  ckpt.metadata["finetune.last_layer_only"] = cfg.last_layer_only ? "1" : "0";

  fs::create_directories(cfg.out_dir);
  if (!result.transform_curve.empty()) {
    write_loss_csv((fs::path(cfg.out_dir) / "transform_loss.csv").string(),
                   result.transform_curve);
  }
  write_loss_csv((fs::path(cfg.out_dir) / "head_loss.csv").string(), result.head_curve);

  const std::string out = cfg.out_checkpoint.empty() ? cfg.checkpoint : cfg.out_checkpoint;
  save_checkpoint(ckpt, out);
  return result;
}

MetricsReport cmd_evaluate(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.checkpoint.empty()) throw ConfigError("evaluate requires a checkpoint path");
  if (cfg.data_dir.empty()) throw ConfigError("evaluate requires a data directory");
  set_num_threads(cfg.threads);

  Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
  ModelBundle model = load_model(ckpt, cfg);
  const bool any_ablation =
      cfg.no_transform || cfg.generic_prompts || cfg.last_layer_only || cfg.ps_only || cfg.pc_only;
  if (!model.finetuned && !any_ablation) {
    throw DataError("checkpoint is not fine-tuned; run finetune or pass --ablate");
  }

  const LoadedSet query = load_set(cfg.data_dir + "/query", model.classes);
  const int n_images = static_cast<int>(query.images.size());
  const int good = model.embeddings.good_index();

  std::vector<InferenceResult> results(static_cast<std::size_t>(n_images));
  parallel_for(n_images, [&](int i) {
    results[static_cast<std::size_t>(i)] =
        run_inference(model, query.images[static_cast<std::size_t>(i)], cfg);
  });

  // Image-level scores: max over the fused pixel anomaly map.
  ScoredSet image_set;
  std::vector<int> predicted;
  for (int i = 0; i < n_images; ++i) {
    const Tensor& map = results[static_cast<std::size_t>(i)].pixel_map;
    float mx = map.data()[0];
    for (std::int64_t k = 1; k < map.size(); ++k) mx = std::max(mx, map.data()[k]);
    image_set.scores.push_back(mx);
    image_set.labels.push_back(query.labels[static_cast<std::size_t>(i)] == good ? 0 : 1);
    predicted.push_back(results[static_cast<std::size_t>(i)].probs.predicted);
  }

  ScoredSet pixel_set;
  for (int i = 0; i < n_images; ++i) {
    const Tensor& map = results[static_cast<std::size_t>(i)].pixel_map;
    const Tensor& mask = query.masks[static_cast<std::size_t>(i)];
    for (std::int64_t k = 0; k < map.size(); ++k) {
      pixel_set.scores.push_back(map.data()[k]);
      pixel_set.labels.push_back(mask.data()[k] > 0.5f ? 1 : 0);
    }
  }

  std::vector<Tensor> maps;
  maps.reserve(static_cast<std::size_t>(n_images));
  for (auto& r : results) maps.push_back(r.pixel_map);

  MetricsReport report =
      classification_metrics(predicted, query.labels, static_cast<int>(model.classes.size()));
  report.iauroc = auroc(image_set);
  report.pauroc = auroc(pixel_set);
  report.f1max = f1_max(maps, query.masks);

  fs::create_directories(cfg.out_dir);

  nlohmann::ordered_json j;
  j["iauroc"] = report.iauroc;
  j["pauroc"] = report.pauroc;
  j["f1max"] = report.f1max;
  j["accuracy"] = report.accuracy;
  j["precision"] = report.macro_precision;
  j["recall"] = report.macro_recall;
  j["f1"] = report.macro_f1;
  j["confusion"] = report.confusion;
  {
    std::ofstream f(fs::path(cfg.out_dir) / "metrics.json", std::ios::trunc);
    if (!f) throw DataError("cannot write metrics.json");
    f << j.dump(2) << "\n";
  }

  {
    std::ofstream f(fs::path(cfg.out_dir) / "segmentation_metrics.csv", std::ios::trunc);
    f << "iauroc,pauroc,f1max\n"
      << fmt_fixed(report.iauroc) << "," << fmt_fixed(report.pauroc) << ","
      << fmt_fixed(report.f1max) << "\n";
  }
  {
    std::ofstream f(fs::path(cfg.out_dir) / "classification_metrics.csv", std::ios::trunc);
    f << "accuracy,precision,recall,f1\n"
      << fmt_fixed(report.accuracy) << "," << fmt_fixed(report.macro_precision) << ","
      << fmt_fixed(report.macro_recall) << "," << fmt_fixed(report.macro_f1) << "\n";
  }
  {
    std::ofstream f(fs::path(cfg.out_dir) / "classification.csv", std::ios::trunc);
    f << "image_id,predicted_class";
    for (const auto& c : model.classes) f << ",p_" << c;
    f << "\n";
    for (int i = 0; i < n_images; ++i) {
      const auto& r = results[static_cast<std::size_t>(i)];
      f << query.ids[static_cast<std::size_t>(i)] << ","
        << model.classes[static_cast<std::size_t>(r.probs.predicted)];
      for (std::int64_t c = 0; c < r.probs.p.size(); ++c) {
        f << "," << fmt_fixed(r.probs.p.data()[c]);
      }
      f << "\n";
    }
  }

  if (cfg.save_maps) {
    const fs::path maps_dir = fs::path(cfg.out_dir) / "maps";
    fs::create_directories(maps_dir);
    for (int i = 0; i < n_images; ++i) {
      const std::string stem = query.ids[static_cast<std::size_t>(i)];
      write_raw_map((maps_dir / (stem + ".map")).string(),
                    results[static_cast<std::size_t>(i)].pixel_map);
      write_heatmap_pgm((maps_dir / (stem + ".heat.pgm")).string(),
                        results[static_cast<std::size_t>(i)].pixel_map);
    }
  }
  return report;
}

void cmd_segment(const RunConfig& cfg, const std::string& image_path, const std::string& out_map) {
  if (cfg.checkpoint.empty()) throw ConfigError("segment requires a checkpoint path");
  set_num_threads(cfg.threads);
  Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
  ModelBundle model = load_model(ckpt, cfg);
  Tensor image = read_pgm(image_path);
  InferenceResult r = run_inference(model, image, cfg);
  write_raw_map(out_map, r.pixel_map);
  write_heatmap_pgm(out_map + ".pgm", r.pixel_map);
}

void cmd_classify(const RunConfig& cfg, const std::vector<std::string>& image_paths,
                  const std::string& out_csv) {
  if (cfg.checkpoint.empty()) throw ConfigError("classify requires a checkpoint path");
  set_num_threads(cfg.threads);
  Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
  ModelBundle model = load_model(ckpt, cfg);

  std::ostringstream out;
  out << "image_id,predicted_class";
  for (const auto& c : model.classes) out << ",p_" << c;
  out << "\n";
  for (const auto& path : image_paths) {
    Tensor image = read_pgm(path);
    InferenceResult r = run_inference(model, image, cfg);
    std::string stem = fs::path(path).stem().string();
    out << stem << "," << model.classes[static_cast<std::size_t>(r.probs.predicted)];
    for (std::int64_t c = 0; c < r.probs.p.size(); ++c) out << "," << fmt_fixed(r.probs.p.data()[c]);
    out << "\n";
  }

  if (out_csv.empty()) {
    std::fputs(out.str().c_str(), stdout);
  } else {
    std::ofstream f(out_csv, std::ios::trunc);
    if (!f) throw DataError("cannot write " + out_csv);
    f << out.str();
  }
}

}  // namespace semclip
