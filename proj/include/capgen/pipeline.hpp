#pragma once

#include "capgen/config.hpp"
#include "capgen/manifest.hpp"
#include "capgen/metrics.hpp"
#include "capgen/model.hpp"
#include "capgen/synthetic.hpp"
#include "capgen/trainer.hpp"

namespace capgen {

struct Dataset {
  TokenizerVocab vocab;
  std::vector<TrainSample> train, val, test;
  // Row-aligned manifest entries per split, for modalities and references.
  std::vector<ManifestEntry> train_entries, val_entries, test_entries;
};

// Reads decode.* keys and writes the resolved values back into cfg so every
// run directory records them. Defaults: beam 4, length penalty 1.1,
// no-repeat-ngram 3, max length 128.
DecodeConfig decode_config(Config& cfg);

ModelConfig model_config(Config& cfg, std::size_t vocab_size);
TrainConfig train_config(Config& cfg);

// Loads manifest + vocab from data.dir, cleans captions, assigns
// leak-audited article splits, preprocesses images, tokenizes.
Dataset load_dataset(Config& cfg);

CaptionModel build_model(Config& cfg, const TokenizerVocab& vocab, unsigned seed);
CaptionModel load_model(Config& cfg, const TokenizerVocab& vocab, const std::string& checkpoint);

// Multi-seed training; writes checkpoints, JSONL logs, run_records.json,
// aggregate.json, and resolved_config.txt under out_dir.
SeedRuns run_train(Config cfg, const std::string& out_dir);

struct EvalOutput {
  double bleu = 0.0, rouge_l = 0.0, cider = 0.0, meteor = 0.0;
  std::vector<double> per_item_rouge;
  std::vector<StratumReport> strata;
  std::vector<std::string> hypotheses, references;
};

// Decodes every sample and scores hypotheses against references; entries
// supply modalities for stratification.
EvalOutput evaluate_split(const CaptionModel& model, const std::vector<TrainSample>& samples,
                          const std::vector<ManifestEntry>& entries, const TokenizerVocab& vocab,
                          const DecodeConfig& dcfg, std::vector<std::string>* warnings = nullptr);

// Beam-decodes one split of data.dir (eval.split, default test) with the
// checkpoint named by eval.checkpoint; writes eval_report.json and
// resolved_config.txt.
EvalOutput run_eval(Config cfg, const std::string& out_dir);

// Single-image captioning; writes caption.txt and alpha.json, returns text.
std::string run_caption(Config cfg, const std::string& image_path, const std::string& out_dir);

// Renders a region-weight grid as a min-max normalized PGM, bilinearly
// upscaled to the source image size (8x the grid when no image is given).
// With a source image also writes a 50/50 PPM overlay at
// out_path + ".overlay.ppm".
void export_heatmap(const std::string& alpha_json_path, const std::string& image_path,
                    const std::string& out_path);

struct AblationArm {
  std::string name;
  RegionalMode mode;
  std::size_t pooled_tokens;
};

// Trains and evaluates every arm on identical data and seeds; emits
// per-arm metrics and pairwise significance tests to ablation_report.json.
void run_ablation(Config cfg, const std::string& out_dir);

}  // namespace capgen
