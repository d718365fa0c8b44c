#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "capgen/pipeline.hpp"

namespace {

// Exit codes: 0 success, 2 configuration, 3 data or I/O, 4 numeric failure.
constexpr int kConfigExit = 2, kDataExit = 3, kNumericExit = 4;

capgen::Config make_config(const std::string& config_path,
                           const std::vector<std::string>& overrides) {
  capgen::Config cfg;
  if (!config_path.empty()) cfg = capgen::Config::load(config_path);
  for (const std::string& kv : overrides) cfg.set_pair(kv);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Image captioning with region-weighted attention"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", image_path, split, alpha_path, heat_out;
  std::vector<std::string> overrides;
  std::size_t seed = 0;
  bool seed_given = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--set", overrides, "override a config key (key=value, repeatable)");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "single training seed override")
        ->each([&](const std::string&) { seed_given = true; });
  };

  CLI::App* train = app.add_subcommand("train", "train across seeds and record losses");
  add_common(train);

  CLI::App* eval = app.add_subcommand("eval", "decode a split and score it");
  add_common(eval);
  eval->add_option("--split", split, "train, val, or test")
      ->check(CLI::IsMember({"train", "val", "test"}));

  CLI::App* caption = app.add_subcommand("caption", "caption one image");
  add_common(caption);
  caption->add_option("--image", image_path, "PGM/PPM image to caption")->required();

  CLI::App* heatmap = app.add_subcommand("heatmap", "render region weights as an image");
  heatmap->add_option("--alpha", alpha_path, "alpha.json from the caption command")->required();
  heatmap->add_option("--image", image_path, "source image for sizing and overlay");
  heatmap->add_option("--out", heat_out, "output PGM path")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "train and compare attention arms");
  add_common(ablate);

  CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic shapes dataset");
  std::size_t gen_count = 200;
  gen->add_option("--out", out_dir, "dataset directory");
  gen->add_option("--count", gen_count, "number of images");
  gen->add_option("--seed", seed, "generator seed")
      ->each([&](const std::string&) { seed_given = true; });

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(gen)) {
      capgen::SyntheticSpec spec;
      spec.count = gen_count;
      if (seed_given) spec.seed = static_cast<unsigned>(seed);
      capgen::write_synthetic_dataset(out_dir, spec);
      std::printf("wrote %zu images to %s\n", spec.count, out_dir.c_str());
      return 0;
    }

    capgen::Config cfg = make_config(config_path, overrides);
    if (seed_given) cfg.set("train.seeds", std::to_string(seed));

    if (app.got_subcommand(train)) {
      capgen::SeedRuns runs = capgen::run_train(cfg, out_dir);
      const capgen::Summary& s = runs.best_val_loss;
      std::printf("trained %zu seed(s); best val loss mean %.6f", runs.records.size(), s.mean);
      if (!s.insufficient_n) std::printf(" (95%% CI +/- %.6f)", s.ci_half_width);
      std::printf("\n");
    } else if (app.got_subcommand(eval)) {
      if (!split.empty()) cfg.set("eval.split", split);
      capgen::EvalOutput ev = capgen::run_eval(cfg, out_dir);
      std::printf("bleu %.4f  rouge_l %.4f  cider %.4f  meteor %.4f  (%zu items)\n", ev.bleu,
                  ev.rouge_l, ev.cider, ev.meteor, ev.per_item_rouge.size());
    } else if (app.got_subcommand(caption)) {
      std::string text = capgen::run_caption(cfg, image_path, out_dir);
      std::printf("%s\n", text.c_str());
    } else if (app.got_subcommand(heatmap)) {
      capgen::export_heatmap(alpha_path, image_path, heat_out);
      std::printf("wrote %s\n", heat_out.c_str());
    } else if (app.got_subcommand(ablate)) {
      capgen::run_ablation(cfg, out_dir);
      std::printf("wrote %s/ablation_report.json\n", out_dir.c_str());
    }
    return 0;
  } catch (const capgen::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigExit;
  } catch (const capgen::ContractError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigExit;
  } catch (const capgen::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kDataExit;
  } catch (const capgen::IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kDataExit;
  } catch (const capgen::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumericExit;
  } catch (const capgen::ShapeError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kDataExit;
  }
}
