#include "capgen/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "capgen/checkpoint.hpp"
#include "capgen/image.hpp"

namespace capgen {

namespace {

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

std::string join_path(const std::string& dir, const std::string& rel) {
  if (!rel.empty() && rel[0] == '/') return rel;
  return dir + "/" + rel;
}

std::string join_seeds(const std::vector<unsigned>& seeds) {
  std::string s;
  for (unsigned v : seeds) {
    if (!s.empty()) s += ",";
    s += std::to_string(v);
  }
  return s;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

nlohmann::json summary_json(const Summary& s) {
  return {{"n", s.n},
          {"mean", s.mean},
          {"stddev", s.stddev},
          {"ci_half_width", s.ci_half_width},
          {"ci_low", s.ci_low},
          {"ci_high", s.ci_high},
          {"insufficient_n", s.insufficient_n}};
}

nlohmann::json record_json(const RunRecord& r) {
  return {{"seed", r.seed},
          {"train_losses", r.train_losses},
          {"val_losses", r.val_losses},
          {"best_epoch", r.best_epoch},
          {"stopped_early", r.stopped_early},
          {"best_checkpoint", r.best_checkpoint}};
}

nlohmann::json eval_json(const EvalOutput& ev) {
  nlohmann::json strata = nlohmann::json::array();
  for (const StratumReport& s : ev.strata) {
    strata.push_back({{"modality", s.modality},
                      {"count", s.count},
                      {"bleu", s.bleu},
                      {"rouge_l", s.rouge_l},
                      {"cider", s.cider},
                      {"meteor", s.meteor}});
  }
  return {{"bleu", ev.bleu},
          {"rouge_l", ev.rouge_l},
          {"cider", ev.cider},
          {"meteor", ev.meteor},
          {"per_item_rouge", ev.per_item_rouge},
          {"strata", strata},
          {"hypotheses", ev.hypotheses},
          {"references", ev.references}};
}

}  // namespace

DecodeConfig decode_config(Config& cfg) {
  DecodeConfig d;
  d.beam_size = cfg.get_size("decode.beam_size", d.beam_size);
  d.length_penalty = cfg.get_double("decode.length_penalty", d.length_penalty);
  d.no_repeat_ngram = cfg.get_size("decode.no_repeat_ngram", d.no_repeat_ngram);
  d.max_length = cfg.get_size("decode.max_length", d.max_length);
  d.validate();
  cfg.set("decode.beam_size", std::to_string(d.beam_size));
  cfg.set("decode.length_penalty", fmt(d.length_penalty));
  cfg.set("decode.no_repeat_ngram", std::to_string(d.no_repeat_ngram));
  cfg.set("decode.max_length", std::to_string(d.max_length));
  return d;
}

ModelConfig model_config(Config& cfg, std::size_t vocab_size) {
  ModelConfig mc = ModelConfig::toy(vocab_size);
  mc.regional.mode = regional_mode_from_string(
      cfg.get_str("model.regional_mode", to_string(mc.regional.mode)));
  mc.regional.pooled_tokens = cfg.get_size("model.pooled_tokens", mc.regional.pooled_tokens);
  mc.freeze_encoder = cfg.get_bool("model.freeze_encoder", false);
  mc.validate();
  cfg.set("model.regional_mode", to_string(mc.regional.mode));
  cfg.set("model.pooled_tokens", std::to_string(mc.regional.pooled_tokens));
  cfg.set("model.freeze_encoder", mc.freeze_encoder ? "true" : "false");
  return mc;
}

TrainConfig train_config(Config& cfg) {
  TrainConfig t;
  t.epochs = cfg.get_size("train.epochs", t.epochs);
  t.batch_size = cfg.get_size("train.batch_size", t.batch_size);
  t.lr = cfg.get_double("train.lr", t.lr);
  t.weight_decay = cfg.get_double("train.weight_decay", t.weight_decay);
  t.patience = cfg.get_size("train.patience", t.patience);
  t.seeds = cfg.get_seed_list("train.seeds", t.seeds);
  t.clip_norm = cfg.get_double("train.clip_norm", t.clip_norm);
  t.unfreeze_embedding_epoch =
      cfg.get_size("train.unfreeze_embedding_epoch", t.unfreeze_embedding_epoch);
  t.validate();
  cfg.set("train.epochs", std::to_string(t.epochs));
  cfg.set("train.batch_size", std::to_string(t.batch_size));
  cfg.set("train.lr", fmt(t.lr));
  cfg.set("train.weight_decay", fmt(t.weight_decay));
  cfg.set("train.patience", std::to_string(t.patience));
  cfg.set("train.seeds", join_seeds(t.seeds));
  cfg.set("train.clip_norm", fmt(t.clip_norm));
  return t;
}

Dataset load_dataset(Config& cfg) {
  std::string dir = cfg.get_str("data.dir");
  Dataset ds;
  ds.vocab = TokenizerVocab::load(dir + "/vocab.txt");

  ManifestLoad ml = load_manifest(dir + "/manifest.jsonl", cfg.get_bool("data.strict", false));
  std::vector<ManifestEntry> entries;
  for (ManifestEntry& e : ml.entries) {
    e.caption = clean_caption(e.caption);
    if (!e.caption.empty()) entries.push_back(std::move(e));
  }
  if (entries.empty()) throw DataError("dataset " + dir + " has no usable entries");

  SplitRatios ratios{cfg.get_double("data.train_ratio", 0.8),
                     cfg.get_double("data.val_ratio", 0.1),
                     cfg.get_double("data.test_ratio", 0.1)};
  std::uint64_t split_seed = cfg.get_size("data.split_seed", 42);
  assign_splits(entries, ratios, split_seed);

  std::size_t image_size = EncoderConfig::toy().image_size;
  std::size_t max_len = cfg.get_size("data.max_len", 16);
  bool do_augment = cfg.get_bool("data.augment", false);
  cfg.set("data.max_len", std::to_string(max_len));
  cfg.set("data.split_seed", std::to_string(split_seed));
  cfg.set("data.augment", do_augment ? "true" : "false");

  // Augmentation runs once here, at dataset construction, with its own seed,
  // so every training arm sees bit-identical batches.
  Rng aug_rng(cfg.get_size("data.augment_seed", 123));
  AugmentConfig aug;

  for (const ManifestEntry& e : entries) {
    ImageBuffer img = load_pnm(join_path(dir, e.image_path));
    if (do_augment && e.split == "train") img = augment(img, aug_rng, aug);
    TrainSample s{preprocess_image(img, image_size), tokenize(e.caption, ds.vocab, max_len)};
    if (e.split == "train") {
      ds.train.push_back(std::move(s));
      ds.train_entries.push_back(e);
    } else if (e.split == "val") {
      ds.val.push_back(std::move(s));
      ds.val_entries.push_back(e);
    } else {
      ds.test.push_back(std::move(s));
      ds.test_entries.push_back(e);
    }
  }
  return ds;
}

CaptionModel build_model(Config& cfg, const TokenizerVocab& vocab, unsigned seed) {
  Rng rng(seed);
  ModelConfig mc = model_config(cfg, vocab.size());
  bool freeze_emb = cfg.get_bool("model.freeze_embedding", false);
  cfg.set("model.freeze_embedding", freeze_emb ? "true" : "false");
  EmbeddingTable emb;
  if (cfg.has("model.embedding_path")) {
    emb = load_embedding_table(cfg.get_str("model.embedding_path"), vocab.size(),
                               mc.decoder.model_dim, freeze_emb);
  } else {
    emb = random_embedding_table(vocab.size(), mc.decoder.model_dim, rng, freeze_emb);
  }
  return CaptionModel(mc, std::move(emb), rng);
}

CaptionModel load_model(Config& cfg, const TokenizerVocab& vocab, const std::string& checkpoint) {
  CaptionModel model = build_model(cfg, vocab, 0);
  ParamMap pm = model.params();
  load_tensors(checkpoint, pm);
  return model;
}

SeedRuns run_train(Config cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  Dataset ds = load_dataset(cfg);
  TrainConfig tc = train_config(cfg);
  tc.checkpoint_dir = out_dir;
  tc.log_path = out_dir + "/train_log.jsonl";
  decode_config(cfg);  // resolve decode defaults into the recorded config

  SeedRuns runs = run_seeds([&](unsigned seed) { return build_model(cfg, ds.vocab, seed); },
                            ds.train, ds.val, tc);

  nlohmann::json records = nlohmann::json::array();
  for (const RunRecord& r : runs.records) records.push_back(record_json(r));
  write_text(out_dir + "/run_records.json", nlohmann::json{{"runs", records}}.dump(2) + "\n");
  write_text(out_dir + "/aggregate.json",
             nlohmann::json{{"best_val_loss", summary_json(runs.best_val_loss)}}.dump(2) + "\n");
  cfg.save(out_dir + "/resolved_config.txt");
  return runs;
}

EvalOutput evaluate_split(const CaptionModel& model, const std::vector<TrainSample>& samples,
                          const std::vector<ManifestEntry>& entries, const TokenizerVocab& vocab,
                          const DecodeConfig& dcfg, std::vector<std::string>* warnings) {
  if (samples.size() != entries.size())
    throw ContractError("evaluate_split: samples and entries disagree");
  if (samples.empty()) throw DataError("evaluate_split: empty split");

  EvalOutput ev;
  std::vector<EvalPair> pairs;
  Rng rng(0);  // decoding is eval-mode; the stream is never consulted
  for (std::size_t i = 0; i < samples.size(); ++i) {
    BeamResult br = model.caption(samples[i].image, dcfg, rng);
    std::string hyp = detokenize(br.best.ids, vocab);
    std::string ref = detokenize(samples[i].tokens, vocab);
    EvalPair p = make_eval_pair(hyp, ref, entries[i].modality);
    ev.per_item_rouge.push_back(rouge_l({p}));
    ev.hypotheses.push_back(std::move(hyp));
    ev.references.push_back(std::move(ref));
    pairs.push_back(std::move(p));
  }
  ev.bleu = bleu(pairs);
  ev.rouge_l = rouge_l(pairs);
  ev.cider = cider(pairs, warnings);
  ev.meteor = meteor_lite(pairs);
  ev.strata = stratify(pairs, warnings);
  return ev;
}

EvalOutput run_eval(Config cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  Dataset ds = load_dataset(cfg);
  DecodeConfig dc = decode_config(cfg);
  std::string checkpoint = cfg.get_str("eval.checkpoint");
  std::string split = cfg.get_str("eval.split", "test");
  cfg.set("eval.split", split);
  CaptionModel model = load_model(cfg, ds.vocab, checkpoint);

  const std::vector<TrainSample>* samples = &ds.test;
  const std::vector<ManifestEntry>* entries = &ds.test_entries;
  if (split == "train") {
    samples = &ds.train;
    entries = &ds.train_entries;
  } else if (split == "val") {
    samples = &ds.val;
    entries = &ds.val_entries;
  } else if (split != "test") {
    throw ConfigError("eval.split must be train, val, or test, got '" + split + "'");
  }

  std::vector<std::string> warnings;
  EvalOutput ev = evaluate_split(model, *samples, *entries, ds.vocab, dc, &warnings);

  nlohmann::json report = eval_json(ev);
  report["warnings"] = warnings;
  report["checkpoint"] = checkpoint;
  report["split"] = split;

  // Optional paired comparison against a previous run's per-item scores.
  if (cfg.has("eval.compare_with")) {
    std::string other_path = cfg.get_str("eval.compare_with");
    std::ifstream in(other_path);
    if (!in) throw IoError("cannot open comparison report: " + other_path);
    nlohmann::json other = nlohmann::json::parse(in);
    std::vector<double> baseline = other.at("per_item_rouge").get<std::vector<double>>();
    Rng rng(7);
    PairedTestResult rnd =
        paired_test(ev.per_item_rouge, baseline, PairedMethod::randomization, 2000, rng);
    PairedTestResult boot =
        paired_test(ev.per_item_rouge, baseline, PairedMethod::bootstrap, 2000, rng);
    report["paired_vs_baseline"] = {{"baseline", other_path},
                                    {"randomization_p", rnd.p},
                                    {"bootstrap_p", boot.p},
                                    {"mean_diff", rnd.mean_diff},
                                    {"insufficient_n", rnd.insufficient_n}};
  }

  write_text(out_dir + "/eval_report.json", report.dump(2) + "\n");
  cfg.save(out_dir + "/resolved_config.txt");
  return ev;
}

std::string run_caption(Config cfg, const std::string& image_path, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::string dir = cfg.get_str("data.dir");
  TokenizerVocab vocab = TokenizerVocab::load(dir + "/vocab.txt");
  DecodeConfig dc = decode_config(cfg);
  CaptionModel model = load_model(cfg, vocab, cfg.get_str("eval.checkpoint"));

  ImageBuffer img = load_pnm(image_path);
  Tensor x = preprocess_image(img, model.config().encoder.image_size);
  Shape s = x.shape();
  Tensor batch = x.reshaped({1, s[0], s[1], s[2]});

  Rng rng(0);
  EncodeResult enc = model.encode(batch, rng, false);
  BeamResult br = model.caption(x, dc, rng);
  std::string text = detokenize(br.best.ids, vocab);

  write_text(out_dir + "/caption.txt", text + "\n");
  nlohmann::json alpha{{"alpha", enc.regional.alpha.vec()},
                       {"height", enc.grid.height},
                       {"width", enc.grid.width},
                       {"image", image_path}};
  write_text(out_dir + "/alpha.json", alpha.dump(2) + "\n");
  cfg.save(out_dir + "/resolved_config.txt");
  return text;
}

void export_heatmap(const std::string& alpha_json_path, const std::string& image_path,
                    const std::string& out_path) {
  std::ifstream in(alpha_json_path);
  if (!in) throw IoError("cannot open alpha file: " + alpha_json_path);
  nlohmann::json j = nlohmann::json::parse(in);
  std::vector<double> alpha = j.at("alpha").get<std::vector<double>>();
  std::size_t h = j.at("height").get<std::size_t>();
  std::size_t w = j.at("width").get<std::size_t>();
  if (alpha.size() != h * w)
    throw DataError("alpha length " + std::to_string(alpha.size()) + " does not match grid " +
                    std::to_string(h) + "x" + std::to_string(w));

  double lo = *std::min_element(alpha.begin(), alpha.end());
  double hi = *std::max_element(alpha.begin(), alpha.end());
  ImageBuffer grid;
  grid.width = w;
  grid.height = h;
  grid.channels = 1;
  grid.pixels.resize(h * w);
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    // Constant weights normalize to 0 rather than dividing by zero.
    double v = hi > lo ? (alpha[i] - lo) / (hi - lo) : 0.0;
    grid.pixels[i] = static_cast<std::uint8_t>(v * 255.0 + 0.5);
  }

  std::size_t out_w = w * 8, out_h = h * 8;
  ImageBuffer source;
  if (!image_path.empty()) {
    source = load_pnm(image_path);
    out_w = source.width;
    out_h = source.height;
  }
  ImageBuffer heat = resize_bilinear(grid, out_w, out_h);
  save_pnm(out_path, heat);

  if (!image_path.empty()) {
    ImageBuffer overlay;
    overlay.width = out_w;
    overlay.height = out_h;
    overlay.channels = 3;
    overlay.pixels.resize(out_w * out_h * 3);
    for (std::size_t y = 0; y < out_h; ++y) {
      for (std::size_t x = 0; x < out_w; ++x) {
        double g = source.at(y, x, 0);
        double hv = heat.at(y, x, 0);
        overlay.at(y, x, 0) = static_cast<std::uint8_t>(0.5 * g + 0.5 * hv + 0.5);
        overlay.at(y, x, 1) = static_cast<std::uint8_t>(0.5 * g + 0.5);
        overlay.at(y, x, 2) = static_cast<std::uint8_t>(0.5 * g + 0.5);
      }
    }
    save_pnm(out_path + ".overlay.ppm", overlay);
  }
}

void run_ablation(Config cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  Dataset ds = load_dataset(cfg);
  DecodeConfig dc = decode_config(cfg);

  std::vector<AblationArm> arms;
  std::size_t base_k = cfg.get_size("model.pooled_tokens", 8);
  {
    std::stringstream ss(cfg.get_str("ablate.modes", "reweight,off"));
    std::string part;
    while (std::getline(ss, part, ',')) {
      RegionalMode m = regional_mode_from_string(part);
      arms.push_back({to_string(m), m, base_k});
    }
  }
  if (cfg.has("ablate.k_sweep")) {
    std::stringstream ss(cfg.get_str("ablate.k_sweep"));
    std::string part;
    while (std::getline(ss, part, ',')) {
      std::size_t k = 0;
      try {
        k = static_cast<std::size_t>(std::stoull(part));
      } catch (const std::exception&) {
        throw ConfigError("ablate.k_sweep has a non-integer entry: '" + part + "'");
      }
      arms.push_back({"reweight_k" + std::to_string(k), RegionalMode::reweight, k});
    }
  }
  if (arms.size() < 2) throw ConfigError("ablation needs at least two arms");

  std::vector<unsigned> seeds = cfg.get_seed_list("ablate.seeds", {42});

  // Fingerprint of the shared token stream: every arm must train on it.
  std::uint64_t data_hash = 14695981039346656037ULL;
  for (const TrainSample& s : ds.train) {
    for (int id : s.tokens) {
      data_hash ^= static_cast<std::uint64_t>(id) + 1;
      data_hash *= 1099511628211ULL;
    }
  }

  nlohmann::json arm_reports = nlohmann::json::array();
  std::vector<EvalOutput> evals;
  for (const AblationArm& arm : arms) {
    Config arm_cfg = cfg;
    arm_cfg.set("model.regional_mode", to_string(arm.mode));
    arm_cfg.set("model.pooled_tokens", std::to_string(arm.pooled_tokens));

    TrainConfig tc = train_config(arm_cfg);
    tc.seeds = seeds;
    std::string arm_dir = out_dir + "/" + arm.name;
    std::filesystem::create_directories(arm_dir);
    tc.checkpoint_dir = arm_dir;
    tc.log_path = arm_dir + "/train_log.jsonl";

    // Evaluate with the first seed's model, which train_loop leaves holding
    // its best weights; the remaining seeds only feed the loss aggregate.
    std::vector<RunRecord> records;
    CaptionModel first = build_model(arm_cfg, ds.vocab, seeds[0]);
    records.push_back(train_loop(first, ds.train, ds.val, tc, seeds[0]));
    std::vector<double> best_losses{records[0].val_losses[records[0].best_epoch]};
    for (std::size_t i = 1; i < seeds.size(); ++i) {
      CaptionModel m = build_model(arm_cfg, ds.vocab, seeds[i]);
      records.push_back(train_loop(m, ds.train, ds.val, tc, seeds[i]));
      best_losses.push_back(records.back().val_losses[records.back().best_epoch]);
    }

    std::vector<std::string> warnings;
    EvalOutput ev = evaluate_split(first, ds.test, ds.test_entries, ds.vocab, dc, &warnings);

    nlohmann::json rec = nlohmann::json::array();
    for (const RunRecord& r : records) rec.push_back(record_json(r));
    arm_reports.push_back({{"name", arm.name},
                           {"mode", to_string(arm.mode)},
                           {"pooled_tokens", arm.pooled_tokens},
                           {"metrics", eval_json(ev)},
                           {"best_val_loss", summary_json(summarize(best_losses))},
                           {"runs", rec},
                           {"warnings", warnings}});
    evals.push_back(std::move(ev));
  }

  nlohmann::json pairwise = nlohmann::json::array();
  Rng rng(7);
  for (std::size_t a = 0; a < arms.size(); ++a) {
    for (std::size_t b = a + 1; b < arms.size(); ++b) {
      PairedTestResult rnd = paired_test(evals[a].per_item_rouge, evals[b].per_item_rouge,
                                         PairedMethod::randomization, 2000, rng);
      PairedTestResult boot = paired_test(evals[a].per_item_rouge, evals[b].per_item_rouge,
                                          PairedMethod::bootstrap, 2000, rng);
      pairwise.push_back({{"a", arms[a].name},
                          {"b", arms[b].name},
                          {"randomization_p", rnd.p},
                          {"bootstrap_p", boot.p},
                          {"mean_rouge_diff", rnd.mean_diff}});
    }
  }

  nlohmann::json report{{"arms", arm_reports},
                        {"pairwise", pairwise},
                        {"train_data_hash", data_hash},
                        {"seeds", seeds}};
  write_text(out_dir + "/ablation_report.json", report.dump(2) + "\n");
  cfg.save(out_dir + "/resolved_config.txt");
}

}  // namespace capgen
