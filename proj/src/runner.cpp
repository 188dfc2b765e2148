#include "meda/runner.hpp"

#include "meda/binary_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace meda {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  io::write_file(p, std::span<const char>(text.data(), text.size()));
}

std::string file_hash(const fs::path& p) {
  const auto bytes = io::read_file(p);
  return fnv1a_hex(std::string_view(bytes.data(), bytes.size()));
}

json read_manifest(const RunLayout& layout) {
  if (!fs::exists(layout.manifest())) return json::object();
  const auto bytes = io::read_file(layout.manifest());
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw DataError("manifest " + layout.manifest().string() + " is not valid JSON");
  }
}

/// Records the config hash and the content hash of each listed artifact.
void update_manifest(const RunConfig& cfg, const RunLayout& layout, const std::vector<fs::path>& files) {
  json m = read_manifest(layout);
  m["config_hash"] = config_hash(cfg);
  m["seed"] = cfg.seed;
  if (!m.contains("artifacts")) m["artifacts"] = json::object();
  for (const auto& f : files) m["artifacts"][fs::relative(f, layout.root).generic_string()] = file_hash(f);
  write_text(layout.manifest(), m.dump(2) + "\n");
}

void require_matching_manifest(const RunConfig& cfg, const RunLayout& layout) {
  if (!fs::exists(layout.manifest()))
    throw DataError("run directory " + layout.root.string() + " is not prepared; run `prepare` first");
  const json m = read_manifest(layout);
  const std::string want = config_hash(cfg);
  if (!m.contains("config_hash") || m["config_hash"] != want)
    throw ConfigError("run directory " + layout.root.string() + " was prepared with a different config (hash " +
                      m.value("config_hash", std::string("?")) + ", expected " + want + ")");
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double mx = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - mx).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

FullTrainingConfig full_config(const RunConfig& cfg) {
  FullTrainingConfig f;
  f.arch = cfg.arch;
  f.weights = cfg.weights;
  f.lgm = cfg.lgm;
  f.train = cfg.train;
  f.train.seed = cfg.train_seed();
  f.evolution = cfg.evolution;
  f.minority_classes = cfg.data.imbalance.minority_classes;
  return f;
}

QuartetExpectation expectation(const RunConfig& cfg, const PreparedData& data) {
  QuartetExpectation e;
  e.class_count = data.class_count;
  e.latent_dim = cfg.arch.latent_dim;
  e.image_size = data.train.pixel_count();
  return e;
}

struct TrainedRun {
  ModelQuartet models;
  GMMParams gmm_opti;
};

TrainedRun load_trained(const RunConfig& cfg, const PreparedData& data) {
  const RunLayout layout{cfg.run_dir};
  const auto paths = layout.artifacts();
  if (!fs::exists(paths.models) || !fs::exists(paths.gmm_opti))
    throw DataError("run directory " + layout.root.string() + " has no trained models; run `train` first");
  TrainedRun t{load_params(paths.models, expectation(cfg, data)), load_gmm(paths.gmm_opti)};
  if (t.gmm_opti.class_count() != data.class_count || t.gmm_opti.dim() != cfg.arch.latent_dim)
    throw PersistError("gmm_opti shape does not match the config");
  return t;
}

std::string method_label(const std::string& method) { return method; }

}  // namespace

// ---------------------------------------------------------------------------------

Network train_final_classifier(const LabeledImageSet& train, int class_count, const RunConfig& cfg) {
  train.validate();
  Rng rng(cfg.classifier_seed());
  Network net = Network::create(image_classifier_spec(cfg.arch, train.pixel_count(), class_count), rng);
  AdamState opt(AdamHyper{cfg.final_classifier.lr});
  const auto n = static_cast<std::size_t>(train.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto bs = static_cast<std::size_t>(cfg.final_classifier.batch_size);
  for (int epoch = 0; epoch < cfg.final_classifier.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const LabeledImageSet batch = train.subset(idx);
      const auto fwd = forward(net.spec, net.params, batch.images);
      const Vector w = Vector::Constant(static_cast<Eigen::Index>(idx.size()), 1.0 / static_cast<double>(idx.size()));
      Matrix g;
      const double loss = weighted_cross_entropy(fwd.output, batch.labels, w, &g);
      if (!std::isfinite(loss)) throw TrainingDiverged("final classifier loss is not finite", {});
      const auto back = backward(net.spec, net.params, fwd.cache, g);
      adam_step(net.params, back.param_grads, opt);
    }
  }
  return net;
}

FinalClassifierResult fit_and_evaluate(const LabeledImageSet& train, const LabeledImageSet& val, int class_count,
                                       const RunConfig& cfg) {
  FinalClassifierResult r{train_final_classifier(train, class_count, cfg), {}};
  r.report = evaluate(softmax_rows(predict(r.classifier, val.images)), val.labels, cfg.g_mean);
  return r;
}

ImbalancedSplit build_split(const RunConfig& cfg) {
  LabeledImageSet full;
  if (cfg.data.source == "glyphs") {
    GlyphConfig g = cfg.data.glyphs;
    g.seed = cfg.glyph_seed();
    full = generate_glyphs(g);
  } else {
    full = load_idx(cfg.data.idx_images, cfg.data.idx_labels);
  }
  ImbalanceSpec spec = cfg.data.imbalance;
  spec.seed = cfg.split_seed();
  spec.validate(class_count_of(full));
  return make_imbalanced(full, spec);
}

PreparedData load_prepared(const RunConfig& cfg) {
  const RunLayout layout{cfg.run_dir};
  require_matching_manifest(cfg, layout);
  PreparedData d;
  d.train = read_image_archive(layout.train_images(), layout.train_labels());
  d.val = read_image_archive(layout.val_images(), layout.val_labels());
  d.class_count = std::max(class_count_of(d.train), class_count_of(d.val));
  return d;
}

LabeledImageSet balanced_set(const RunConfig& cfg, const PreparedData& data, const std::string& method,
                             std::ostream& log) {
  SamplerConfig sc = cfg.sampler;
  sc.seed = cfg.balance_seed();
  SamplerResult r;
  if (method == "none") {
    return data.train;
  } else if (method == "meda_lude") {
    const TrainedRun t = load_trained(cfg, data);
    Rng rng(cfg.balance_seed());
    return balance_with_synthetic(data.train, t.models.decoder, t.gmm_opti, rng);
  } else if (method == "ros") {
    r = ros(data.train, sc.seed);
  } else if (method == "smote") {
    r = smote(data.train, sc);
  } else if (method == "adasyn") {
    r = adasyn(data.train, sc);
  } else {
    throw ConfigError("unknown balancing method '" + method + "' (expected none, meda_lude, ros, smote or adasyn)");
  }
  for (const auto& note : r.notes) log << "note: " << method << ": " << note << "\n";
  return r.set;
}

// ---------------------------------------------------------------------------------

void cmd_prepare(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const RunLayout layout{cfg.run_dir};
  const ImbalancedSplit split = build_split(cfg);
  fs::create_directories(layout.root);
  write_text(layout.config(), config_to_json(cfg));
  write_image_archive(split.train, layout.train_images(), layout.train_labels());
  write_image_archive(split.val, layout.val_images(), layout.val_labels());

  json m = json::object();
  m["config_hash"] = config_hash(cfg);
  m["seed"] = cfg.seed;
  m["train_indices"] = split.train_indices;
  m["val_indices"] = split.val_indices;
  const int k = std::max(class_count_of(split.train), class_count_of(split.val));
  m["train_histogram"] = split.train.histogram(k);
  m["val_histogram"] = split.val.histogram(k);
  m["artifacts"] = json::object();
  write_text(layout.manifest(), m.dump(2) + "\n");
  update_manifest(cfg, layout,
                  {layout.config(), layout.train_images(), layout.train_labels(), layout.val_images(),
                   layout.val_labels()});
  log << "prepared " << split.train.size() << " training and " << split.val.size() << " validation images in "
      << layout.root.string() << "\n";
}

FullTrainingResult cmd_train(const RunConfig& cfg, std::ostream& log) {
  const RunLayout layout{cfg.run_dir};
  const PreparedData data = load_prepared(cfg);
  const auto paths = layout.artifacts();
  FullTrainingResult r;
  try {
    r = run_full_training(data.train, data.class_count, full_config(cfg), paths);
  } catch (const TrainingDiverged&) {
    std::vector<fs::path> written;
    for (const auto& p : {paths.models, paths.gmm_init, paths.gmm_opti, paths.loss_trace, paths.evolution_trace})
      if (fs::exists(p)) written.push_back(p);
    update_manifest(cfg, layout, written);
    throw;
  }
  update_manifest(cfg, layout, {paths.models, paths.gmm_init, paths.gmm_opti, paths.loss_trace, paths.evolution_trace});
  log << "trained " << r.loss_trace.steps.size() << " steps; artifacts in " << layout.root.string() << "\n";
  return r;
}

LabeledImageSet cmd_generate(const RunConfig& cfg, int label, int count, const fs::path& out_images,
                             std::ostream& log) {
  const PreparedData data = load_prepared(cfg);
  if (label < 0 || label >= data.class_count)
    throw ConfigError("class " + std::to_string(label) + " is outside 0.." + std::to_string(data.class_count - 1));
  if (count < 0) throw ConfigError("count must be >= 0");
  const TrainedRun t = load_trained(cfg, data);
  Rng rng(cfg.balance_seed() + static_cast<std::uint64_t>(label) * 1000003ULL);
  LabeledImageSet out = synthesize_class(t.models.decoder, t.gmm_opti, label, count, data.train.height,
                                         data.train.width, data.train.channels, rng);
  fs::path labels_path = out_images;
  labels_path.replace_extension(".labels.idx");
  write_image_archive(out, out_images, labels_path);
  log << "wrote " << count << " images of class " << label << " to " << out_images.string() << "\n";
  return out;
}

LabeledImageSet cmd_balance(const RunConfig& cfg, const std::string& method, std::ostream& log) {
  const RunLayout layout{cfg.run_dir};
  const PreparedData data = load_prepared(cfg);
  LabeledImageSet set = balanced_set(cfg, data, method, log);
  write_image_archive(set, layout.balanced_images(method), layout.balanced_labels(method));
  update_manifest(cfg, layout, {layout.balanced_images(method), layout.balanced_labels(method)});
  log << method << ": " << set.size() << " images\n";
  return set;
}

namespace {

LabeledImageSet load_or_build_balanced(const RunConfig& cfg, const PreparedData& data, const std::string& method,
                                       std::ostream& log) {
  const RunLayout layout{cfg.run_dir};
  if (method != "none" && fs::exists(layout.balanced_images(method)))
    return read_image_archive(layout.balanced_images(method), layout.balanced_labels(method));
  return balanced_set(cfg, data, method, log);
}

void append_report(const RunConfig& cfg, const std::string& method, const EvalReport& r) {
  const RunLayout layout{cfg.run_dir};
  std::string text;
  if (fs::exists(layout.reports())) {
    const auto bytes = io::read_file(layout.reports());
    text.assign(bytes.begin(), bytes.end());
  } else {
    text = "method,config_hash," + report_csv_header() + "\n";
  }
  text += method_label(method) + "," + config_hash(cfg) + "," + report_csv_values(r) + "\n";
  write_text(layout.reports(), text);
}

}  // namespace

EvalReport cmd_evaluate(const RunConfig& cfg, const std::string& method, std::ostream& log) {
  const RunLayout layout{cfg.run_dir};
  const PreparedData data = load_prepared(cfg);
  const LabeledImageSet train = load_or_build_balanced(cfg, data, method, log);
  const auto r = fit_and_evaluate(train, data.val, data.class_count, cfg);
  for (const auto& note : r.report.notes) log << "note: " << note << "\n";
  append_report(cfg, method, r.report);
  update_manifest(cfg, layout, {layout.reports()});
  log << method << ": " << report_csv_header() << "\n" << method << ": " << report_csv_values(r.report) << "\n";
  return r.report;
}

std::vector<EvalReport> cmd_compare(const RunConfig& cfg, const std::vector<std::string>& methods,
                                    std::ostream& log) {
  const RunLayout layout{cfg.run_dir};
  const PreparedData data = load_prepared(cfg);
  std::vector<std::string> cols{"none"};
  for (const auto& m : methods)
    if (m != "none") cols.push_back(m);
  std::vector<EvalReport> reports;
  for (const auto& m : cols) {
    const LabeledImageSet train = load_or_build_balanced(cfg, data, m, log);
    reports.push_back(fit_and_evaluate(train, data.val, data.class_count, cfg).report);
    append_report(cfg, m, reports.back());
  }
  std::string text = "criterion";
  for (const auto& m : cols) text += "," + m;
  text += "\n";
  const std::vector<std::pair<const char*, double EvalReport::*>> rows{
      {"accuracy", &EvalReport::accuracy},          {"precision", &EvalReport::macro_precision},
      {"recall", &EvalReport::macro_recall},        {"specificity", &EvalReport::macro_specificity},
      {"f1", &EvalReport::macro_f1},                {"g_mean", &EvalReport::g_mean},
      {"auc", &EvalReport::auc}};
  char buf[64];
  for (const auto& [name, field] : rows) {
    text += name;
    for (const auto& r : reports) {
      std::snprintf(buf, sizeof buf, ",%.10f", r.*field);
      text += buf;
    }
    text += "\n";
  }
  write_text(layout.compare(), text);
  update_manifest(cfg, layout, {layout.compare(), layout.reports()});
  log << text;
  return reports;
}

Matrix cmd_export_features(const RunConfig& cfg, const std::string& set, const std::string& layer,
                           const fs::path& out, std::ostream& log) {
  const PreparedData data = load_prepared(cfg);
  LabeledImageSet images;
  if (set == "train") {
    images = data.train;
  } else if (set == "val") {
    images = data.val;
  } else if (set.rfind("balanced:", 0) == 0) {
    images = load_or_build_balanced(cfg, data, set.substr(9), log);
  } else {
    throw ConfigError("unknown feature set '" + set + "' (expected train, val or balanced:<method>)");
  }
  Matrix features;
  if (layer == "latent") {
    const TrainedRun t = load_trained(cfg, data);
    features = predict(t.models.encoder, images.images);
  } else if (layer == "classifier") {
    const TrainedRun t = load_trained(cfg, data);
    const auto& net = t.models.image_classifier;
    features = forward(net.spec, net.params, images.images).cache.inputs.back();
  } else if (layer == "final") {
    const Network net = train_final_classifier(images, data.class_count, cfg);
    features = forward(net.spec, net.params, images.images).cache.inputs.back();
  } else {
    throw ConfigError("unknown layer '" + layer + "' (expected latent, classifier or final)");
  }
  std::string text = "label";
  for (Eigen::Index j = 0; j < features.cols(); ++j) text += ",f" + std::to_string(j);
  text += "\n";
  char buf[64];
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    text += std::to_string(images.labels[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.10g", features(i, j));
      text += buf;
    }
    text += "\n";
  }
  write_text(out, text);
  log << "wrote " << features.rows() << " x " << features.cols() << " features to " << out.string() << "\n";
  return features;
}

int run_guarded(const std::function<void()>& body, std::ostream& err) {
  try {
    body();
    return kExitOk;
  } catch (const TrainingDiverged& e) {
    err << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace meda
