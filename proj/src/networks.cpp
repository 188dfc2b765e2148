#include "meda/networks.hpp"

#include "meda/binary_io.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

namespace meda {

namespace {

std::uint64_t next_instance() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix sigmoid(const Matrix& x) {
  return x.unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

[[noreturn]] void persist_fail(const std::string& what) { throw PersistError(what); }

}  // namespace

std::string to_string(OutputHead head) {
  switch (head) {
    case OutputHead::Linear: return "linear";
    case OutputHead::Sigmoid: return "sigmoid";
    case OutputHead::Logits: return "logits";
  }
  return "unknown";
}

void MLPSpec::validate() const {
  if (layer_sizes.size() < 2) throw ShapeError("an MLP needs at least input and output sizes");
  for (int s : layer_sizes)
    if (s < 1) throw ShapeError("layer sizes must be >= 1");
}

NetworkParams NetworkParams::init(const MLPSpec& spec, Rng& rng) {
  spec.validate();
  NetworkParams p;
  p.instance = next_instance();
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const int in = spec.layer_sizes[l];
    const int out = spec.layer_sizes[l + 1];
    const bool last = l + 1 == spec.layer_count();
    // He for ReLU layers, Glorot for the head.
    const double bound = last ? std::sqrt(6.0 / (in + out)) : std::sqrt(6.0 / in);
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix w(in, out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    p.weights.push_back(std::move(w));
    p.biases.push_back(Matrix::Zero(1, out));
  }
  return p;
}

NetworkParams NetworkParams::zeros_like(const NetworkParams& other) {
  NetworkParams p;
  for (const auto& w : other.weights) p.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
  for (const auto& b : other.biases) p.biases.push_back(Matrix::Zero(b.rows(), b.cols()));
  return p;
}

void NetworkParams::check_against(const MLPSpec& spec) const {
  spec.validate();
  if (weights.size() != spec.layer_count() || biases.size() != spec.layer_count())
    throw ShapeError("parameter layer count differs from spec");
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    if (weights[l].rows() != spec.layer_sizes[l] || weights[l].cols() != spec.layer_sizes[l + 1] ||
        biases[l].rows() != 1 || biases[l].cols() != spec.layer_sizes[l + 1])
      throw ShapeError("layer " + std::to_string(l) + " parameter shape differs from spec");
  }
}

bool NetworkParams::same_values(const NetworkParams& other) const {
  if (weights.size() != other.weights.size()) return false;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != other.weights[l].rows() || weights[l].cols() != other.weights[l].cols()) return false;
    if (std::memcmp(weights[l].data(), other.weights[l].data(), sizeof(double) * weights[l].size()) != 0) return false;
    if (std::memcmp(biases[l].data(), other.biases[l].data(), sizeof(double) * biases[l].size()) != 0) return false;
  }
  return true;
}

std::vector<Matrix*> NetworkParams::tensors() {
  std::vector<Matrix*> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(&weights[l]);
    out.push_back(&biases[l]);
  }
  return out;
}

std::vector<const Matrix*> NetworkParams::tensors() const {
  std::vector<const Matrix*> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(&weights[l]);
    out.push_back(&biases[l]);
  }
  return out;
}

Network Network::create(MLPSpec spec, Rng& rng) {
  NetworkParams params = NetworkParams::init(spec, rng);
  return {std::move(spec), std::move(params)};
}

ForwardResult forward(const MLPSpec& spec, const NetworkParams& params, const Matrix& batch) {
  params.check_against(spec);
  if (batch.cols() != spec.input_size())
    throw ShapeError("batch width " + std::to_string(batch.cols()) + " differs from input size " +
                     std::to_string(spec.input_size()));
  ForwardResult r;
  r.cache.inputs.reserve(spec.layer_count());
  r.cache.pre.reserve(spec.layer_count());
  Matrix x = batch;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    Matrix z = x * params.weights[l];
    z.rowwise() += params.biases[l].row(0);
    r.cache.inputs.push_back(std::move(x));
    const bool last = l + 1 == spec.layer_count();
    if (!last) {
      x = relu(z);
    } else {
      x = spec.head == OutputHead::Sigmoid ? sigmoid(z) : z;
    }
    r.cache.pre.push_back(std::move(z));
  }
  r.output = x;
  r.cache.output = std::move(x);
  r.cache.instance = params.instance;
  r.cache.revision = params.revision;
  r.cache.valid = true;
  return r;
}

Matrix predict(const Network& net, const Matrix& batch) {
  net.params.check_against(net.spec);
  if (batch.cols() != net.spec.input_size()) throw ShapeError("batch width differs from network input size");
  Matrix x = batch;
  for (std::size_t l = 0; l < net.spec.layer_count(); ++l) {
    Matrix z = x * net.params.weights[l];
    z.rowwise() += net.params.biases[l].row(0);
    const bool last = l + 1 == net.spec.layer_count();
    x = !last ? relu(z) : (net.spec.head == OutputHead::Sigmoid ? sigmoid(z) : z);
  }
  return x;
}

BackwardResult backward(const MLPSpec& spec, const NetworkParams& params, const ForwardCache& cache,
                        const Matrix& output_grad) {
  if (!cache.valid || cache.instance != params.instance || cache.revision != params.revision ||
      cache.inputs.size() != spec.layer_count())
    throw CacheError("forward cache does not belong to the current parameters");
  if (output_grad.rows() != cache.output.rows() || output_grad.cols() != cache.output.cols())
    throw ShapeError("output gradient shape differs from forward output");

  BackwardResult r;
  r.param_grads = NetworkParams::zeros_like(params);
  Matrix g = output_grad;
  if (spec.head == OutputHead::Sigmoid)
    g = g.cwiseProduct(cache.output.cwiseProduct((1.0 - cache.output.array()).matrix()));
  for (std::size_t l = spec.layer_count(); l-- > 0;) {
    if (l + 1 != spec.layer_count()) {
      g = (cache.pre[l].array() > 0.0).select(g.array(), 0.0).matrix();
    }
    r.param_grads.weights[l].noalias() = cache.inputs[l].transpose() * g;
    r.param_grads.biases[l] = g.colwise().sum();
    g = g * params.weights[l].transpose();
  }
  r.input_grad = std::move(g);
  return r;
}

// --- Adam -----------------------------------------------------------------------

void adam_update(std::span<Matrix* const> params, std::span<const Matrix* const> grads, AdamState& state) {
  if (params.size() != grads.size()) throw ShapeError("parameter and gradient lists differ in length");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i]->rows() || params[i]->cols() != grads[i]->cols())
      throw ShapeError("gradient " + std::to_string(i) + " shape differs from its parameter");
    if (!grads[i]->allFinite()) throw GradError("non-finite gradient in tensor " + std::to_string(i));
  }
  if (state.first.empty()) {
    for (const Matrix* p : params) {
      state.first.push_back(Matrix::Zero(p->rows(), p->cols()));
      state.second.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (state.first.size() != params.size()) throw ShapeError("optimizer state does not mirror parameters");

  ++state.step;
  const auto& h = state.hyper;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& m = state.first[i];
    Matrix& v = state.second[i];
    const Matrix& g = *grads[i];
    m = h.beta1 * m + (1.0 - h.beta1) * g;
    v = h.beta2 * v + (1.0 - h.beta2) * g.cwiseProduct(g);
    if (h.lr == 0.0) continue;
    params[i]->array() -= h.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + h.eps);
  }
}

void adam_step(NetworkParams& params, const NetworkParams& grads, AdamState& state) {
  const auto p = params.tensors();
  const auto g = grads.tensors();
  adam_update(p, g, state);
  ++params.revision;
}

ReconstructionLoss weighted_reconstruction_loss(const Matrix& x_hat, const Matrix& x, const Vector& row_weights) {
  if (x_hat.rows() != x.rows() || x_hat.cols() != x.cols()) throw ShapeError("reconstruction shapes differ");
  if (row_weights.size() != x.rows()) throw ShapeError("weight count differs from batch size");
  ReconstructionLoss r;
  const Matrix diff = x_hat - x;
  const double d = static_cast<double>(x.cols());
  r.value = row_weights.dot(diff.cwiseProduct(diff).rowwise().sum()) / d;
  r.grad = (2.0 / d) * (row_weights.asDiagonal() * diff);
  return r;
}

ReconstructionLoss reconstruction_loss(const Matrix& x_hat, const Matrix& x) {
  const Eigen::Index n = x.rows();
  return weighted_reconstruction_loss(x_hat, x, Vector::Constant(n, n > 0 ? 1.0 / static_cast<double>(n) : 0.0));
}

// --- quartet ---------------------------------------------------------------------

void ModelQuartet::validate() const {
  encoder.params.check_against(encoder.spec);
  decoder.params.check_against(decoder.spec);
  latent_classifier.params.check_against(latent_classifier.spec);
  image_classifier.params.check_against(image_classifier.spec);
  const int h = encoder.spec.output_size();
  if (decoder.spec.input_size() != h || latent_classifier.spec.input_size() != h)
    throw ShapeError("latent width differs between encoder, decoder and latent classifier");
  if (decoder.spec.output_size() != encoder.spec.input_size() ||
      image_classifier.spec.input_size() != decoder.spec.output_size())
    throw ShapeError("image size differs between encoder, decoder and image classifier");
  if (latent_classifier.spec.output_size() != image_classifier.spec.output_size())
    throw ShapeError("classifiers disagree on the class count");
}

namespace {

std::vector<int> chain(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

}  // namespace

MLPSpec image_classifier_spec(const ArchitectureConfig& arch, int image_size, int class_count) {
  return {chain(image_size, arch.image_classifier_hidden, class_count), OutputHead::Logits};
}

ModelQuartet build_quartet(const ArchitectureConfig& arch, int image_size, int class_count, Rng& rng) {
  ModelQuartet q;
  q.encoder = Network::create({chain(image_size, arch.encoder_hidden, arch.latent_dim), OutputHead::Linear}, rng);
  q.decoder = Network::create({chain(arch.latent_dim, arch.decoder_hidden, image_size), OutputHead::Sigmoid}, rng);
  q.latent_classifier =
      Network::create({chain(arch.latent_dim, arch.latent_classifier_hidden, class_count), OutputHead::Logits}, rng);
  q.image_classifier = Network::create(image_classifier_spec(arch, image_size, class_count), rng);
  q.validate();
  return q;
}

namespace {

constexpr std::string_view kModelMagic = "MLUDE01";
constexpr std::uint32_t kModelVersion = 1;

void encode_network(io::ByteWriter& w, const Network& net) {
  w.put_u8(static_cast<std::uint8_t>(net.spec.head));
  w.put_u32(static_cast<std::uint32_t>(net.spec.layer_sizes.size()));
  for (int s : net.spec.layer_sizes) w.put_u64(static_cast<std::uint64_t>(s));
  for (std::size_t l = 0; l < net.params.weights.size(); ++l) {
    const Matrix& wm = net.params.weights[l];
    const Matrix& bm = net.params.biases[l];
    for (Eigen::Index i = 0; i < wm.size(); ++i) w.put_f64(wm.data()[i]);
    for (Eigen::Index i = 0; i < bm.size(); ++i) w.put_f64(bm.data()[i]);
  }
}

Network decode_network(io::ByteReader& r, const std::string& name) {
  Network net;
  const auto head = r.get_u8(name + ".head");
  if (head > 2) r.fail(name + ": unknown output head " + std::to_string(head));
  net.spec.head = static_cast<OutputHead>(head);
  const auto count = r.get_u32(name + ".layer_count");
  if (count < 2 || count > 64) r.fail(name + ": implausible layer count " + std::to_string(count));
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto s = r.get_u64(name + ".layer_size");
    if (s == 0 || s > (1u << 24)) r.fail(name + ": implausible layer size");
    net.spec.layer_sizes.push_back(static_cast<int>(s));
  }
  net.params.instance = next_instance();
  for (std::size_t l = 0; l < net.spec.layer_count(); ++l) {
    Matrix wm(net.spec.layer_sizes[l], net.spec.layer_sizes[l + 1]);
    Matrix bm(1, net.spec.layer_sizes[l + 1]);
    if (r.remaining() < 8 * static_cast<std::size_t>(wm.size() + bm.size())) r.fail(name + ": truncated weights");
    for (Eigen::Index i = 0; i < wm.size(); ++i) wm.data()[i] = r.get_f64(name + ".weights");
    for (Eigen::Index i = 0; i < bm.size(); ++i) bm.data()[i] = r.get_f64(name + ".biases");
    net.params.weights.push_back(std::move(wm));
    net.params.biases.push_back(std::move(bm));
  }
  return net;
}

}  // namespace

std::vector<char> encode_models(const ModelQuartet& models) {
  models.validate();
  io::ByteWriter w;
  w.put_bytes(kModelMagic);
  w.put_u32(kModelVersion);
  encode_network(w, models.encoder);
  encode_network(w, models.decoder);
  encode_network(w, models.latent_classifier);
  encode_network(w, models.image_classifier);
  return w.bytes();
}

ModelQuartet decode_models(std::span<const char> bytes, const QuartetExpectation& expect) {
  io::ByteReader r(bytes, persist_fail);
  if (r.get_bytes(kModelMagic.size(), "magic") != kModelMagic) r.fail("bad model magic header");
  if (const auto v = r.get_u32("version"); v != kModelVersion)
    r.fail("unsupported model version " + std::to_string(v));
  ModelQuartet q;
  q.encoder = decode_network(r, "encoder");
  q.decoder = decode_network(r, "decoder");
  q.latent_classifier = decode_network(r, "latent_classifier");
  q.image_classifier = decode_network(r, "image_classifier");
  if (r.remaining() != 0) r.fail("trailing bytes after model payload");
  try {
    q.validate();
  } catch (const ShapeError& e) {
    throw PersistError(std::string("inconsistent model file: ") + e.what());
  }
  auto check = [](const char* field, std::optional<int> want, int got) {
    if (want && *want != got)
      throw PersistError(std::string("field ") + field + " mismatch: file has " + std::to_string(got) +
                         ", expected " + std::to_string(*want));
  };
  check("K", expect.class_count, q.class_count());
  check("h", expect.latent_dim, q.latent_dim());
  check("image_size", expect.image_size, q.image_size());
  return q;
}

void save_params(const ModelQuartet& models, const std::filesystem::path& path) {
  io::write_file(path, encode_models(models));
}

ModelQuartet load_params(const std::filesystem::path& path, const QuartetExpectation& expect) {
  std::vector<char> bytes;
  try {
    bytes = io::read_file(path);
  } catch (const DataError& e) {
    throw PersistError(e.what());
  }
  return decode_models(bytes, expect);
}

}  // namespace meda
