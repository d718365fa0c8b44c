#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "capgen/adamw.hpp"
#include "capgen/model.hpp"
#include "capgen/stats.hpp"

namespace capgen {

struct TrainSample {
  Tensor image;             // [3,S,S], preprocessed
  std::vector<int> tokens;  // fixed-length id sequence starting with BOS
};

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 8;
  double lr = 1e-3;  // toy default; 1e-5 suits pretrained fine-tuning
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t patience = 3;
  std::vector<unsigned> seeds = {42, 43, 44};
  double clip_norm = 1.0;
  int pad_id = 0;
  // Epoch index from which the embedding table trains; default never.
  std::size_t unfreeze_embedding_epoch = std::numeric_limits<std::size_t>::max();
  std::string checkpoint_dir;  // empty: best weights restored in memory only
  std::string log_path;        // empty: no JSONL log

  void validate() const;

  AdamWConfig optimizer() const { return {lr, beta1, beta2, eps, weight_decay}; }
};

struct RunRecord {
  unsigned seed = 0;
  std::vector<double> train_losses;  // one per completed epoch
  std::vector<double> val_losses;
  std::size_t best_epoch = 0;  // 0-based index into val_losses
  bool stopped_early = false;
  std::string best_checkpoint;  // path, empty when kept in memory
};

// Stop after `patience` consecutive epochs without a new minimum.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  // Returns true when training should stop after this observation.
  bool observe(double val_loss);

  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }

 private:
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t seen_ = 0;
  std::size_t since_best_ = 0;
};

// One optimizer step on a batch; returns the loss value.
double train_step(CaptionModel& model, const std::vector<TrainSample>& batch, AdamW& opt,
                  const TrainConfig& cfg, Rng& rng);

// Mean loss over the dataset without gradient recording.
double eval_loss(const CaptionModel& model, const std::vector<TrainSample>& data,
                 const TrainConfig& cfg);

RunRecord train_loop(CaptionModel& model, const std::vector<TrainSample>& train,
                     const std::vector<TrainSample>& val, const TrainConfig& cfg, unsigned seed);

struct SeedRuns {
  std::vector<RunRecord> records;
  Summary best_val_loss;  // aggregate over seeds
};

using ModelFactory = std::function<CaptionModel(unsigned seed)>;

SeedRuns run_seeds(const ModelFactory& make_model, const std::vector<TrainSample>& train,
                   const std::vector<TrainSample>& val, const TrainConfig& cfg);

}  // namespace capgen
