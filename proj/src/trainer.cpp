#include "capgen/trainer.hpp"

#include <ctime>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "capgen/checkpoint.hpp"

namespace capgen {

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw ConfigError("epochs and batch_size must be positive");
  if (patience == 0 || patience > epochs) throw ConfigError("patience must be in [1, epochs]");
  if (seeds.empty()) throw ConfigError("at least one seed required");
  if (clip_norm <= 0.0) throw ConfigError("clip_norm must be positive");
}

bool EarlyStopper::observe(double val_loss) {
  ++seen_;
  if (val_loss < best_) {
    best_ = val_loss;
    best_epoch_ = seen_ - 1;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  return since_best_ >= patience_;
}

namespace {

Tensor stack_images(const std::vector<TrainSample>& batch) {
  const Shape& s = batch[0].image.shape();
  if (s.size() != 3) throw ShapeError("train sample image must be [C,H,W]");
  Tensor out({batch.size(), s[0], s[1], s[2]});
  std::size_t per = batch[0].image.size();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].image.shape() != s) throw ShapeError("mixed image shapes in batch");
    std::copy(batch[i].image.vec().begin(), batch[i].image.vec().end(),
              out.data() + i * per);
  }
  return out;
}

std::vector<std::vector<int>> gather_tokens(const std::vector<TrainSample>& batch) {
  std::vector<std::vector<int>> seqs;
  seqs.reserve(batch.size());
  for (const TrainSample& s : batch) seqs.push_back(s.tokens);
  return seqs;
}

void append_log(const std::string& path, std::size_t epoch, const char* split, double loss,
                unsigned seed) {
  if (path.empty()) return;
  nlohmann::json j{{"epoch", epoch},
                   {"split", split},
                   {"loss", loss},
                   {"seed", seed},
                   {"timestamp", static_cast<long long>(std::time(nullptr))}};
  std::ofstream out(path, std::ios::app);
  out << j.dump() << "\n";
}

}  // namespace

double train_step(CaptionModel& model, const std::vector<TrainSample>& batch, AdamW& opt,
                  const TrainConfig& cfg, Rng& rng) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  Tape tape;
  double loss_value;
  {
    TapeScope scope(tape);
    Tensor loss = model.forward_loss(stack_images(batch), gather_tokens(batch), cfg.pad_id, rng,
                                     /*training=*/true);
    loss_value = loss.item();
    tape.backward(loss);
  }
  ParamMap pm = model.params();
  clip_grad_norm(pm, cfg.clip_norm);
  opt.step(pm);
  pm.zero_grads();
  return loss_value;
}

double eval_loss(const CaptionModel& model, const std::vector<TrainSample>& data,
                 const TrainConfig& cfg) {
  if (data.empty()) throw DataError("eval_loss: empty split");
  Rng eval_rng(0);  // dropout disabled in eval mode; stream unused
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += cfg.batch_size) {
    std::size_t end = std::min(start + cfg.batch_size, data.size());
    std::vector<TrainSample> batch(data.begin() + static_cast<long>(start),
                                   data.begin() + static_cast<long>(end));
    Tensor loss = model.forward_loss(stack_images(batch), gather_tokens(batch), cfg.pad_id,
                                     eval_rng, /*training=*/false);
    total += loss.item() * static_cast<double>(end - start);
  }
  return total / static_cast<double>(data.size());
}

RunRecord train_loop(CaptionModel& model, const std::vector<TrainSample>& train,
                     const std::vector<TrainSample>& val, const TrainConfig& cfg, unsigned seed) {
  cfg.validate();
  if (train.empty() || val.empty()) throw DataError("train_loop: empty split");

  Rng rng(seed);
  AdamW opt(cfg.optimizer());
  RunRecord rec;
  rec.seed = seed;
  EarlyStopper stopper(cfg.patience);

  std::vector<std::vector<double>> best_weights;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch >= cfg.unfreeze_embedding_epoch) model.decoder().embedding().set_frozen(false);
    rng.shuffle(order);

    double train_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::size_t end = std::min(start + cfg.batch_size, order.size());
      std::vector<TrainSample> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);
      train_total += train_step(model, batch, opt, cfg, rng) * static_cast<double>(end - start);
    }
    double train_loss = train_total / static_cast<double>(train.size());
    double val_loss = eval_loss(model, val, cfg);
    rec.train_losses.push_back(train_loss);
    rec.val_losses.push_back(val_loss);
    append_log(cfg.log_path, epoch, "train", train_loss, seed);
    append_log(cfg.log_path, epoch, "val", val_loss, seed);

    bool stop = stopper.observe(val_loss);
    if (stopper.best_epoch() == epoch) {
      best_weights.clear();
      ParamMap snapshot = model.params();
      for (const auto& [name, t] : snapshot.items()) best_weights.push_back(t.vec());
    }
    if (stop) {
      rec.stopped_early = true;
      break;
    }
  }

  rec.best_epoch = stopper.best_epoch();
  ParamMap pm = model.params();
  for (std::size_t i = 0; i < pm.size(); ++i) pm.items()[i].second.vec() = best_weights[i];
  if (!cfg.checkpoint_dir.empty()) {
    rec.best_checkpoint = cfg.checkpoint_dir + "/seed" + std::to_string(seed) + "_best.ckpt";
    save_tensors(rec.best_checkpoint, pm);
  }
  return rec;
}

SeedRuns run_seeds(const ModelFactory& make_model, const std::vector<TrainSample>& train,
                   const std::vector<TrainSample>& val, const TrainConfig& cfg) {
  cfg.validate();
  SeedRuns out;
  std::vector<double> best_vals;
  for (unsigned seed : cfg.seeds) {
    CaptionModel model = make_model(seed);
    RunRecord rec = train_loop(model, train, val, cfg, seed);
    best_vals.push_back(rec.val_losses[rec.best_epoch]);
    out.records.push_back(std::move(rec));
  }
  out.best_val_loss = summarize(best_vals);
  return out;
}

}  // namespace capgen
