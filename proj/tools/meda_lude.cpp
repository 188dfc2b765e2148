#include "meda/runner.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string run_dir;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "JSON run config");
  sub->add_option("--seed", c.seed, "overrides the config seed");
  sub->add_option("--run-dir", c.run_dir, "overrides the config run directory");
}

meda::RunConfig resolve(const Common& c) {
  meda::RunConfig cfg;
  if (!c.config_path.empty()) {
    cfg = meda::load_config(c.config_path);
  } else {
    cfg = meda::default_config();
  }
  if (c.seed) cfg.seed = *c.seed;
  if (!c.run_dir.empty()) cfg.run_dir = c.run_dir;
  cfg.validate();
  return cfg;
}

meda::ConfigPreset parse_preset(const std::string& name) {
  if (name == "glyphs") return meda::ConfigPreset::Glyphs;
  if (name == "mnist-seed0") return meda::ConfigPreset::MnistSeed0;
  if (name == "mnist-seed5") return meda::ConfigPreset::MnistSeed5;
  throw meda::ConfigError("unknown preset '" + name + "' (expected glyphs, mnist-seed0 or mnist-seed5)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-space generative oversampling for imbalanced image classification"};
  app.require_subcommand(1);
  Common common;

  auto* prepare = app.add_subcommand("prepare", "build the imbalanced split and write the run directory");
  add_common(prepare, common);
  bool emit_default = false;
  std::string preset = "glyphs";
  prepare->add_flag("--emit-default-config", emit_default, "print the default config and exit");
  prepare->add_option("--preset", preset, "default config preset: glyphs, mnist-seed0, mnist-seed5");

  auto* train = app.add_subcommand("train", "train the models and evolve the latent mixture");
  add_common(train, common);

  auto* generate = app.add_subcommand("generate", "decode samples of one class from the evolved mixture");
  add_common(generate, common);
  int gen_class = 0;
  int gen_count = 0;
  std::string gen_out;
  generate->add_option("--class", gen_class, "class label")->required();
  generate->add_option("--count", gen_count, "number of images")->required();
  generate->add_option("--out", gen_out, "output archive path (default <run-dir>/generated/class<k>.mlimg)");

  auto* balance = app.add_subcommand("balance", "write a balanced training set");
  add_common(balance, common);
  std::string method;
  balance->add_option("--method", method, "meda_lude, ros, smote or adasyn")->required();

  auto* evaluate = app.add_subcommand("evaluate", "train the final classifier on a set and score it");
  add_common(evaluate, common);
  std::string eval_method = "none";
  evaluate->add_option("--method", eval_method, "none, meda_lude, ros, smote or adasyn");

  auto* compare = app.add_subcommand("compare", "evaluate several methods side by side");
  add_common(compare, common);
  std::vector<std::string> methods = meda::balance_methods();
  compare->add_option("--methods", methods, "methods to compare, comma separated; no balancing is always included")
      ->delimiter(',');

  auto* features = app.add_subcommand("export-features", "write per-sample features as CSV");
  add_common(features, common);
  std::string feat_set = "val";
  std::string feat_layer = "classifier";
  std::string feat_out;
  features->add_option("--set", feat_set, "train, val or balanced:<method>");
  features->add_option("--layer", feat_layer, "latent, classifier or final");
  features->add_option("--out", feat_out, "output CSV (default <run-dir>/features_<set>_<layer>.csv)");

  CLI11_PARSE(app, argc, argv);

  return meda::run_guarded(
      [&] {
        if (prepare->parsed() && emit_default) {
          std::cout << meda::config_to_json(meda::default_config(parse_preset(preset)));
          return;
        }
        const meda::RunConfig cfg = resolve(common);
        if (prepare->parsed()) {
          meda::cmd_prepare(cfg, std::cout);
        } else if (train->parsed()) {
          meda::cmd_train(cfg, std::cout);
        } else if (generate->parsed()) {
          const std::filesystem::path out =
              gen_out.empty() ? std::filesystem::path(cfg.run_dir) / "generated" /
                                    ("class" + std::to_string(gen_class) + ".mlimg")
                              : std::filesystem::path(gen_out);
          meda::cmd_generate(cfg, gen_class, gen_count, out, std::cout);
        } else if (balance->parsed()) {
          meda::cmd_balance(cfg, method, std::cout);
        } else if (evaluate->parsed()) {
          meda::cmd_evaluate(cfg, eval_method, std::cout);
        } else if (compare->parsed()) {
          meda::cmd_compare(cfg, methods, std::cout);
        } else if (features->parsed()) {
          std::string tag = feat_set;
          std::replace(tag.begin(), tag.end(), ':', '_');
          const std::filesystem::path out =
              feat_out.empty() ? std::filesystem::path(cfg.run_dir) / ("features_" + tag + "_" + feat_layer + ".csv")
                               : std::filesystem::path(feat_out);
          meda::cmd_export_features(cfg, feat_set, feat_layer, out, std::cout);
        }
      },
      std::cerr);
}
