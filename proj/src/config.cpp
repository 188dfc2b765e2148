#include "meda/config.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace meda {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + (where.empty() ? "config" : where));
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for " + where + "." + key + ": " + e.what());
  }
}

void read_xi(const json& j, const char* key, std::optional<double>& out, const std::string& where) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (v.is_string() && v.get<std::string>() == "auto") {
    out.reset();
  } else if (v.is_number()) {
    out = v.get<double>();
  } else {
    throw ConfigError(where + "." + key + " must be a number or \"auto\"");
  }
}

json xi_json(const std::optional<double>& v) { return v ? json(*v) : json("auto"); }

json xi_to_json(const XiWeights& x) {
  return {{"rec", xi_json(x.rec)}, {"gm", xi_json(x.gm)}, {"cls_ltt", xi_json(x.cls_ltt)},
          {"cls_ori", xi_json(x.cls_ori)}, {"cls_syn", xi_json(x.cls_syn)}};
}

void xi_from_json(const json& j, XiWeights& x, const std::string& where) {
  reject_unknown(j, where, {"rec", "gm", "cls_ltt", "cls_ori", "cls_syn"});
  read_xi(j, "rec", x.rec, where);
  read_xi(j, "gm", x.gm, where);
  read_xi(j, "cls_ltt", x.cls_ltt, where);
  read_xi(j, "cls_ori", x.cls_ori, where);
  read_xi(j, "cls_syn", x.cls_syn, where);
}

json to_json(const RunConfig& c) {
  const auto& g = c.data.glyphs;
  const auto& im = c.data.imbalance;
  const auto& w = c.weights;
  const auto& t = c.train;
  const auto& e = c.evolution;
  return {
      {"seed", c.seed},
      {"run_dir", c.run_dir},
      {"data",
       {{"source", c.data.source},
        {"idx_images", c.data.idx_images},
        {"idx_labels", c.data.idx_labels},
        {"glyphs",
         {{"classes", g.classes},
          {"per_class", g.per_class},
          {"height", g.height},
          {"width", g.width},
          {"noise_sd", g.noise_sd},
          {"max_shift", g.max_shift},
          {"intensity_jitter", g.intensity_jitter}}},
        {"imbalance",
         {{"minority_classes", im.minority_classes}, {"n_min", im.n_min}, {"n_maj", im.n_maj}, {"n_val", im.n_val}}}}},
      {"model",
       {{"latent_dim", c.arch.latent_dim},
        {"encoder_hidden", c.arch.encoder_hidden},
        {"decoder_hidden", c.arch.decoder_hidden},
        {"latent_classifier_hidden", c.arch.latent_classifier_hidden},
        {"image_classifier_hidden", c.arch.image_classifier_hidden}}},
      {"lgm", {{"alpha", c.lgm.alpha}, {"lambda", c.lgm.lambda_lkd}}},
      {"weights",
       {{"phase1",
         {{"beta_rec", w.phase1.rec}, {"beta_gm", w.phase1.gm}, {"beta_cls_ltt", w.phase1.cls_ltt},
          {"beta_cls_img", w.phase1.cls_img}, {"xi", xi_to_json(w.xi1)}}},
        {"phase2", {{"beta_rec", w.phase2.rec}, {"beta_cls_img", w.phase2.cls_img}, {"xi", xi_to_json(w.xi2)}}},
        {"phase3", {{"beta_gm", w.phase3.gm}, {"beta_cls_ltt", w.phase3.cls_ltt}}}}},
      {"train",
       {{"batch_size", t.batch_size},
        {"max_epochs_phase1", t.max_epochs_phase1},
        {"max_epochs_phase2", t.max_epochs_phase2},
        {"max_epochs_phase3", t.max_epochs_phase3},
        {"patience", t.patience},
        {"min_rel_improvement", t.min_rel_improvement},
        {"lr",
         {{"encoder", t.lr.encoder},
          {"decoder", t.lr.decoder},
          {"latent_classifier", t.lr.latent_classifier},
          {"image_classifier", t.lr.image_classifier},
          {"gmm", t.lr.gmm}}}}},
      {"evolution",
       {{"pop_per_class", e.pop_per_class},
        {"selection_rate", e.selection_rate},
        {"blend", e.blend},
        {"max_iterations", e.max_iterations},
        {"real_batch_per_class", e.real_batch_per_class},
        {"outer_iterations", e.outer_iterations}}},
      {"sampler", {{"k_neighbors", c.sampler.k_neighbors}}},
      {"final_classifier",
       {{"epochs", c.final_classifier.epochs},
        {"batch_size", c.final_classifier.batch_size},
        {"lr", c.final_classifier.lr}}},
      {"metrics", {{"g_mean", c.g_mean == GMeanMode::RecallSpecificity ? "recall_specificity" : "per_class_recall"}}},
  };
}

RunConfig from_json(const json& j) {
  RunConfig c;
  reject_unknown(j, "", {"seed", "run_dir", "data", "model", "lgm", "weights", "train", "evolution", "sampler",
                         "final_classifier", "metrics"});
  read(j, "seed", c.seed, "");
  read(j, "run_dir", c.run_dir, "");
  if (j.contains("data")) {
    const auto& d = j["data"];
    reject_unknown(d, "data", {"source", "idx_images", "idx_labels", "glyphs", "imbalance"});
    read(d, "source", c.data.source, "data");
    read(d, "idx_images", c.data.idx_images, "data");
    read(d, "idx_labels", c.data.idx_labels, "data");
    if (d.contains("glyphs")) {
      const auto& g = d["glyphs"];
      reject_unknown(g, "data.glyphs",
                     {"classes", "per_class", "height", "width", "noise_sd", "max_shift", "intensity_jitter"});
      auto& o = c.data.glyphs;
      read(g, "classes", o.classes, "data.glyphs");
      read(g, "per_class", o.per_class, "data.glyphs");
      read(g, "height", o.height, "data.glyphs");
      read(g, "width", o.width, "data.glyphs");
      read(g, "noise_sd", o.noise_sd, "data.glyphs");
      read(g, "max_shift", o.max_shift, "data.glyphs");
      read(g, "intensity_jitter", o.intensity_jitter, "data.glyphs");
    }
    if (d.contains("imbalance")) {
      const auto& im = d["imbalance"];
      reject_unknown(im, "data.imbalance", {"minority_classes", "n_min", "n_maj", "n_val"});
      auto& o = c.data.imbalance;
      read(im, "minority_classes", o.minority_classes, "data.imbalance");
      read(im, "n_min", o.n_min, "data.imbalance");
      read(im, "n_maj", o.n_maj, "data.imbalance");
      read(im, "n_val", o.n_val, "data.imbalance");
    }
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    reject_unknown(m, "model", {"latent_dim", "encoder_hidden", "decoder_hidden", "latent_classifier_hidden",
                                "image_classifier_hidden"});
    read(m, "latent_dim", c.arch.latent_dim, "model");
    read(m, "encoder_hidden", c.arch.encoder_hidden, "model");
    read(m, "decoder_hidden", c.arch.decoder_hidden, "model");
    read(m, "latent_classifier_hidden", c.arch.latent_classifier_hidden, "model");
    read(m, "image_classifier_hidden", c.arch.image_classifier_hidden, "model");
  }
  if (j.contains("lgm")) {
    reject_unknown(j["lgm"], "lgm", {"alpha", "lambda"});
    read(j["lgm"], "alpha", c.lgm.alpha, "lgm");
    read(j["lgm"], "lambda", c.lgm.lambda_lkd, "lgm");
  }
  if (j.contains("weights")) {
    const auto& w = j["weights"];
    reject_unknown(w, "weights", {"phase1", "phase2", "phase3"});
    if (w.contains("phase1")) {
      const auto& p = w["phase1"];
      reject_unknown(p, "weights.phase1", {"beta_rec", "beta_gm", "beta_cls_ltt", "beta_cls_img", "xi"});
      read(p, "beta_rec", c.weights.phase1.rec, "weights.phase1");
      read(p, "beta_gm", c.weights.phase1.gm, "weights.phase1");
      read(p, "beta_cls_ltt", c.weights.phase1.cls_ltt, "weights.phase1");
      read(p, "beta_cls_img", c.weights.phase1.cls_img, "weights.phase1");
      if (p.contains("xi")) xi_from_json(p["xi"], c.weights.xi1, "weights.phase1.xi");
    }
    if (w.contains("phase2")) {
      const auto& p = w["phase2"];
      reject_unknown(p, "weights.phase2", {"beta_rec", "beta_cls_img", "xi"});
      read(p, "beta_rec", c.weights.phase2.rec, "weights.phase2");
      read(p, "beta_cls_img", c.weights.phase2.cls_img, "weights.phase2");
      if (p.contains("xi")) xi_from_json(p["xi"], c.weights.xi2, "weights.phase2.xi");
    }
    if (w.contains("phase3")) {
      const auto& p = w["phase3"];
      reject_unknown(p, "weights.phase3", {"beta_gm", "beta_cls_ltt"});
      read(p, "beta_gm", c.weights.phase3.gm, "weights.phase3");
      read(p, "beta_cls_ltt", c.weights.phase3.cls_ltt, "weights.phase3");
    }
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    reject_unknown(t, "train", {"batch_size", "max_epochs_phase1", "max_epochs_phase2", "max_epochs_phase3",
                                "patience", "min_rel_improvement", "lr"});
    read(t, "batch_size", c.train.batch_size, "train");
    read(t, "max_epochs_phase1", c.train.max_epochs_phase1, "train");
    read(t, "max_epochs_phase2", c.train.max_epochs_phase2, "train");
    read(t, "max_epochs_phase3", c.train.max_epochs_phase3, "train");
    read(t, "patience", c.train.patience, "train");
    read(t, "min_rel_improvement", c.train.min_rel_improvement, "train");
    if (t.contains("lr")) {
      const auto& l = t["lr"];
      reject_unknown(l, "train.lr", {"encoder", "decoder", "latent_classifier", "image_classifier", "gmm"});
      read(l, "encoder", c.train.lr.encoder, "train.lr");
      read(l, "decoder", c.train.lr.decoder, "train.lr");
      read(l, "latent_classifier", c.train.lr.latent_classifier, "train.lr");
      read(l, "image_classifier", c.train.lr.image_classifier, "train.lr");
      read(l, "gmm", c.train.lr.gmm, "train.lr");
    }
  }
  if (j.contains("evolution")) {
    const auto& e = j["evolution"];
    reject_unknown(e, "evolution", {"pop_per_class", "selection_rate", "blend", "max_iterations",
                                    "real_batch_per_class", "outer_iterations"});
    read(e, "pop_per_class", c.evolution.pop_per_class, "evolution");
    read(e, "selection_rate", c.evolution.selection_rate, "evolution");
    read(e, "blend", c.evolution.blend, "evolution");
    read(e, "max_iterations", c.evolution.max_iterations, "evolution");
    read(e, "real_batch_per_class", c.evolution.real_batch_per_class, "evolution");
    read(e, "outer_iterations", c.evolution.outer_iterations, "evolution");
  }
  if (j.contains("sampler")) {
    reject_unknown(j["sampler"], "sampler", {"k_neighbors"});
    read(j["sampler"], "k_neighbors", c.sampler.k_neighbors, "sampler");
  }
  if (j.contains("final_classifier")) {
    const auto& f = j["final_classifier"];
    reject_unknown(f, "final_classifier", {"epochs", "batch_size", "lr"});
    read(f, "epochs", c.final_classifier.epochs, "final_classifier");
    read(f, "batch_size", c.final_classifier.batch_size, "final_classifier");
    read(f, "lr", c.final_classifier.lr, "final_classifier");
  }
  if (j.contains("metrics")) {
    reject_unknown(j["metrics"], "metrics", {"g_mean"});
    std::string mode = "recall_specificity";
    read(j["metrics"], "g_mean", mode, "metrics");
    if (mode == "recall_specificity") {
      c.g_mean = GMeanMode::RecallSpecificity;
    } else if (mode == "per_class_recall") {
      c.g_mean = GMeanMode::PerClassRecall;
    } else {
      throw ConfigError("metrics.g_mean must be recall_specificity or per_class_recall");
    }
  }
  return c;
}

void check_sizes(const std::vector<int>& v, const char* name) {
  for (int s : v)
    if (s < 1) throw ConfigError(std::string(name) + " layer sizes must be >= 1");
}

}  // namespace

void RunConfig::validate() const {
  if (data.source != "glyphs" && data.source != "idx") throw ConfigError("data.source must be glyphs or idx");
  if (data.source == "idx" && (data.idx_images.empty() || data.idx_labels.empty()))
    throw ConfigError("idx source needs data.idx_images and data.idx_labels");
  if (data.source == "glyphs") {
    const auto& g = data.glyphs;
    if (g.classes < 2 || g.classes > kGlyphTemplateCount) throw ConfigError("data.glyphs.classes must lie in [2, 8]");
    if (g.per_class < 1 || g.height < 1 || g.width < 1 || g.max_shift < 0 || g.noise_sd < 0.0 ||
        g.intensity_jitter < 0.0)
      throw ConfigError("invalid data.glyphs section");
    data.imbalance.validate(g.classes);
    if (g.per_class < std::max(data.imbalance.n_min, data.imbalance.n_maj) + data.imbalance.n_val)
      throw ConfigError("data.glyphs.per_class is too small for the imbalance counts");
  } else {
    data.imbalance.validate(256);
  }
  if (arch.latent_dim < 1) throw ConfigError("model.latent_dim must be >= 1");
  check_sizes(arch.encoder_hidden, "model.encoder_hidden");
  check_sizes(arch.decoder_hidden, "model.decoder_hidden");
  check_sizes(arch.latent_classifier_hidden, "model.latent_classifier_hidden");
  check_sizes(arch.image_classifier_hidden, "model.image_classifier_hidden");
  try {
    lgm.validate();
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  weights.validate();
  train.validate();
  for (double r : {train.lr.encoder, train.lr.decoder, train.lr.latent_classifier, train.lr.image_classifier,
                   train.lr.gmm, final_classifier.lr})
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("learning rates must lie in (0, 1]");
  if (!(train.min_rel_improvement < 1.0)) throw ConfigError("train.min_rel_improvement must be < 1");
  evolution.validate();
  if (sampler.k_neighbors < 1) throw ConfigError("sampler.k_neighbors must be >= 1");
  if (final_classifier.epochs < 0 || final_classifier.batch_size < 1)
    throw ConfigError("invalid final_classifier section");
}

RunConfig default_config(ConfigPreset preset) {
  RunConfig c;
  c.data.imbalance.minority_classes = {1, 3};
  if (preset == ConfigPreset::Glyphs) return c;
  c.data.source = "idx";
  c.data.idx_images = "train-images-idx3-ubyte";
  c.data.idx_labels = "train-labels-idx1-ubyte";
  c.data.imbalance.minority_classes =
      preset == ConfigPreset::MnistSeed0 ? std::vector<int>{2, 8, 4, 9, 1} : std::vector<int>{9, 5, 2, 4, 7};
  c.data.imbalance.n_min = 50;
  c.data.imbalance.n_maj = 5000;
  c.data.imbalance.n_val = 400;
  return c;
}

std::string config_to_json(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c = from_json(j);
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const RunConfig& cfg) {
  json j = to_json(cfg);
  j.erase("run_dir");  // where a run lives does not change what it computes
  return fnv1a_hex(j.dump());
}

}  // namespace meda
