#include "seqbed/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace seqbed::nn {

std::string_view to_string(Activation activation) {
  switch (activation) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
    case Activation::identity: return "identity";
  }
  return "unknown";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "softplus") return Activation::softplus;
  if (name == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

namespace {

template <typename Scalar>
Scalar softplus_scalar(Scalar x) {
  return x > Scalar(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename Scalar>
Scalar sigmoid_scalar(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Matrix<Scalar> activate(Activation activation, const Matrix<Scalar>& z) {
  switch (activation) {
    case Activation::relu: return z.cwiseMax(Scalar(0));
    case Activation::tanh: return z.array().tanh().matrix();
    case Activation::softplus: return z.unaryExpr([](Scalar x) { return softplus_scalar(x); });
    case Activation::identity: return z;
  }
  throw std::logic_error("bad activation");
}

// Multiplies `grad` in place by the activation derivative at pre-activation z.
template <typename Scalar>
void apply_derivative(Activation activation, const Matrix<Scalar>& z, Matrix<Scalar>& grad) {
  switch (activation) {
    case Activation::relu:
      grad = (z.array() > Scalar(0)).select(grad, Scalar(0));
      return;
    case Activation::tanh:
      grad.array() *= Scalar(1) - z.array().tanh().square();
      return;
    case Activation::softplus:
      grad.array() *= z.unaryExpr([](Scalar x) { return sigmoid_scalar(x); }).array();
      return;
    case Activation::identity:
      return;
  }
}

}  // namespace

// --- ParameterSet / Gradient -----------------------------------------------

template <typename Scalar>
std::size_t ParameterSet<Scalar>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
  for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
  return n;
}

template <typename Scalar>
bool ParameterSet<Scalar>::same_shape(const ParameterSet& other) const {
  if (weights.size() != other.weights.size() || biases.size() != other.biases.size()) return false;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i].rows() != other.weights[i].rows() ||
        weights[i].cols() != other.weights[i].cols()) {
      return false;
    }
  }
  for (std::size_t i = 0; i < biases.size(); ++i) {
    if (biases[i].size() != other.biases[i].size()) return false;
  }
  return true;
}

template <typename Scalar>
bool ParameterSet<Scalar>::all_finite() const {
  for (const auto& w : weights) {
    if (!w.allFinite()) return false;
  }
  for (const auto& b : biases) {
    if (!b.allFinite()) return false;
  }
  return true;
}

template <typename Scalar>
ParameterSet<Scalar> ParameterSet<Scalar>::zeros_like() const {
  ParameterSet out;
  for (const auto& w : weights) out.weights.push_back(Matrix<Scalar>::Zero(w.rows(), w.cols()));
  for (const auto& b : biases) out.biases.push_back(Vector<Scalar>::Zero(b.size()));
  return out;
}

template <typename Scalar>
Gradient<Scalar>& Gradient<Scalar>::operator+=(const Gradient& other) {
  if (!d.same_shape(other.d)) throw std::invalid_argument("Gradient: shape mismatch");
  for (std::size_t i = 0; i < d.weights.size(); ++i) d.weights[i] += other.d.weights[i];
  for (std::size_t i = 0; i < d.biases.size(); ++i) d.biases[i] += other.d.biases[i];
  return *this;
}

template <typename Scalar>
Gradient<Scalar>& Gradient<Scalar>::operator*=(Scalar factor) {
  for (auto& w : d.weights) w *= factor;
  for (auto& b : d.biases) b *= factor;
  return *this;
}

// --- Network ---------------------------------------------------------------

template <typename Scalar>
void Network<Scalar>::validate() const {
  if (sizes.size() < 2) throw std::invalid_argument("Network: need at least two layer sizes");
  if (activations.size() != sizes.size() - 1) {
    throw std::invalid_argument("Network: one activation per layer required");
  }
  if (params.weights.size() != activations.size() || params.biases.size() != activations.size()) {
    throw std::invalid_argument("Network: parameter count does not match layers");
  }
  for (std::size_t i = 0; i < activations.size(); ++i) {
    if (sizes[i] < 1 || sizes[i + 1] < 1 || params.weights[i].rows() != sizes[i + 1] ||
        params.weights[i].cols() != sizes[i] || params.biases[i].size() != sizes[i + 1]) {
      throw std::invalid_argument("Network: layer " + std::to_string(i) + " has wrong shape");
    }
  }
}

template <typename Scalar>
Network<Scalar> make_network(std::vector<int> sizes, std::vector<Activation> activations,
                             prob::RngStream& rng, double last_layer_scale) {
  Network<Scalar> net;
  net.sizes = std::move(sizes);
  net.activations = std::move(activations);
  if (net.sizes.size() < 2 || net.activations.size() != net.sizes.size() - 1) {
    throw std::invalid_argument("make_network: inconsistent sizes/activations");
  }
  const std::size_t layers = net.activations.size();
  for (std::size_t i = 0; i < layers; ++i) {
    const int in = net.sizes[i];
    const int out = net.sizes[i + 1];
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    if (i + 1 == layers) bound *= last_layer_scale;
    Matrix<Scalar> w(out, in);
    Vector<Scalar> b(out);
    // Fill in row-major order so the draw sequence matches the checkpoint layout.
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) w(r, c) = static_cast<Scalar>(bound * (2.0 * rng.uniform01() - 1.0));
    }
    for (int r = 0; r < out; ++r) b(r) = static_cast<Scalar>(bound * (2.0 * rng.uniform01() - 1.0));
    net.params.weights.push_back(std::move(w));
    net.params.biases.push_back(std::move(b));
  }
  net.validate();
  return net;
}

template <typename Scalar>
Matrix<Scalar> forward(const Network<Scalar>& net, const Matrix<Scalar>& input,
                       ForwardTrace<Scalar>* trace) {
  if (input.rows() != net.input_dim()) {
    throw std::invalid_argument("forward: input has " + std::to_string(input.rows()) +
                                " rows, network expects " + std::to_string(net.input_dim()));
  }
  if (trace) {
    trace->inputs.clear();
    trace->pre.clear();
  }
  Matrix<Scalar> x = input;
  for (std::size_t i = 0; i < net.activations.size(); ++i) {
    Matrix<Scalar> z = net.params.weights[i] * x;
    z.colwise() += net.params.biases[i];
    Matrix<Scalar> a = activate(net.activations[i], z);
    if (trace) {
      trace->inputs.push_back(std::move(x));
      trace->pre.push_back(std::move(z));
    }
    x = std::move(a);
  }
  return x;
}

template <typename Scalar>
Vector<Scalar> forward(const Network<Scalar>& net, const Vector<Scalar>& input) {
  Matrix<Scalar> out = forward(net, Matrix<Scalar>(input), static_cast<ForwardTrace<Scalar>*>(nullptr));
  return out.col(0);
}

template <typename Scalar>
BackwardResult<Scalar> backward(const Network<Scalar>& net, const ForwardTrace<Scalar>& trace,
                                const Matrix<Scalar>& output_grad, bool param_grads) {
  const std::size_t layers = net.activations.size();
  if (trace.pre.size() != layers || output_grad.rows() != net.output_dim() ||
      output_grad.cols() != trace.pre.back().cols()) {
    throw std::invalid_argument("backward: output_grad does not match the forward trace");
  }
  BackwardResult<Scalar> result;
  if (param_grads) {
    result.grad.d.weights.resize(layers);
    result.grad.d.biases.resize(layers);
  }

  Matrix<Scalar> delta = output_grad;
  for (std::size_t k = layers; k-- > 0;) {
    apply_derivative(net.activations[k], trace.pre[k], delta);
    if (param_grads) {
      result.grad.d.weights[k].noalias() = delta * trace.inputs[k].transpose();
      result.grad.d.biases[k] = delta.rowwise().sum();
    }
    Matrix<Scalar> upstream = net.params.weights[k].transpose() * delta;
    delta = std::move(upstream);
  }
  result.input_grad = std::move(delta);
  return result;
}

template <typename Scalar>
Gradient<Scalar> backward(const Network<Scalar>& net, const Vector<Scalar>& input,
                          const Vector<Scalar>& output_grad) {
  ForwardTrace<Scalar> trace;
  forward(net, Matrix<Scalar>(input), &trace);
  return backward(net, trace, Matrix<Scalar>(output_grad)).grad;
}

// --- optimiser -------------------------------------------------------------

template <typename Scalar>
OptimizerState<Scalar> OptimizerState<Scalar>::zeros_like(const ParameterSet<Scalar>& params) {
  return OptimizerState{params.zeros_like(), params.zeros_like(), 0};
}

template <typename Scalar>
std::pair<ParameterSet<Scalar>, OptimizerState<Scalar>> adam_step(
    const ParameterSet<Scalar>& params, const Gradient<Scalar>& grad,
    const OptimizerState<Scalar>& state, double lr, const AdamHyper& hyper) {
  if (!params.same_shape(grad.d) || !params.same_shape(state.first_moment) ||
      !params.same_shape(state.second_moment)) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  ParameterSet<Scalar> next = params;
  OptimizerState<Scalar> s = state;
  s.step += 1;
  const auto t = static_cast<double>(s.step);
  const Scalar b1 = static_cast<Scalar>(hyper.beta1);
  const Scalar b2 = static_cast<Scalar>(hyper.beta2);
  const Scalar c1 = static_cast<Scalar>(1.0 / (1.0 - std::pow(hyper.beta1, t)));
  const Scalar c2 = static_cast<Scalar>(1.0 / (1.0 - std::pow(hyper.beta2, t)));
  const Scalar step = static_cast<Scalar>(lr);
  const Scalar eps = static_cast<Scalar>(hyper.epsilon);

  auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    p.array() -= step * (m.array() * c1) / ((v.array() * c2).sqrt() + eps);
  };
  for (std::size_t i = 0; i < next.weights.size(); ++i) {
    update(next.weights[i], s.first_moment.weights[i], s.second_moment.weights[i],
           grad.d.weights[i]);
  }
  for (std::size_t i = 0; i < next.biases.size(); ++i) {
    update(next.biases[i], s.first_moment.biases[i], s.second_moment.biases[i],
           grad.d.biases[i]);
  }
  return {std::move(next), std::move(s)};
}

template <typename Scalar>
ParameterSet<Scalar> polyak_update(const ParameterSet<Scalar>& target,
                                   const ParameterSet<Scalar>& online, double tau) {
  if (!target.same_shape(online)) throw std::invalid_argument("polyak_update: shape mismatch");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("polyak_update: tau must be in (0, 1]");
  if (tau == 1.0) return online;
  const Scalar a = static_cast<Scalar>(tau);
  const Scalar keep = static_cast<Scalar>(1.0 - tau);
  ParameterSet<Scalar> out = target;
  for (std::size_t i = 0; i < out.weights.size(); ++i) {
    out.weights[i] = a * online.weights[i] + keep * target.weights[i];
  }
  for (std::size_t i = 0; i < out.biases.size(); ++i) {
    out.biases[i] = a * online.biases[i] + keep * target.biases[i];
  }
  return out;
}

#define SEQBED_NN_INSTANTIATE(T)                                                              \
  template struct ParameterSet<T>;                                                            \
  template struct Gradient<T>;                                                                \
  template struct Network<T>;                                                                 \
  template struct OptimizerState<T>;                                                          \
  template Network<T> make_network<T>(std::vector<int>, std::vector<Activation>,              \
                                      prob::RngStream&, double);                              \
  template Matrix<T> forward<T>(const Network<T>&, const Matrix<T>&, ForwardTrace<T>*);       \
  template Vector<T> forward<T>(const Network<T>&, const Vector<T>&);                         \
  template BackwardResult<T> backward<T>(const Network<T>&, const ForwardTrace<T>&,           \
                                         const Matrix<T>&, bool);                             \
  template Gradient<T> backward<T>(const Network<T>&, const Vector<T>&, const Vector<T>&);    \
  template std::pair<ParameterSet<T>, OptimizerState<T>> adam_step<T>(                        \
      const ParameterSet<T>&, const Gradient<T>&, const OptimizerState<T>&, double,           \
      const AdamHyper&);                                                                      \
  template ParameterSet<T> polyak_update<T>(const ParameterSet<T>&, const ParameterSet<T>&,   \
                                            double);

SEQBED_NN_INSTANTIATE(float)
SEQBED_NN_INSTANTIATE(double)

#undef SEQBED_NN_INSTANTIATE

// --- checkpoints -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'Q', 'B', 'D', 'C', 'K', 'P', 'T'};

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw std::runtime_error("checkpoint: truncated header");
  }
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return static_cast<T>(v);
}

void put_f32(std::ostream& out, float value) {
  put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(value));
}

float get_f32(std::istream& in) { return std::bit_cast<float>(get_le<std::uint32_t>(in)); }

}  // namespace

const NetworkF& Checkpoint::find(std::string_view name) const {
  for (const auto& entry : networks) {
    if (entry.name == name) return entry.net;
  }
  throw std::runtime_error("checkpoint: no network named '" + std::string(name) + "'");
}

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  nlohmann::json manifest;
  manifest["version"] = kCheckpointVersion;
  manifest["metadata"] = nlohmann::json::parse(checkpoint.metadata_json);
  manifest["networks"] = nlohmann::json::array();
  for (const auto& [name, net] : checkpoint.networks) {
    net.validate();
    nlohmann::json entry;
    entry["name"] = name;
    entry["sizes"] = net.sizes;
    std::vector<std::string> acts;
    for (Activation a : net.activations) acts.emplace_back(to_string(a));
    entry["activations"] = acts;
    entry["arrays"] = nlohmann::json::array();
    for (std::size_t i = 0; i < net.params.layers(); ++i) {
      const auto& w = net.params.weights[i];
      entry["arrays"].push_back({{"name", "layer" + std::to_string(i) + ".weight"},
                                 {"shape", {w.rows(), w.cols()}}});
      entry["arrays"].push_back({{"name", "layer" + std::to_string(i) + ".bias"},
                                 {"shape", {net.params.biases[i].size()}}});
    }
    manifest["networks"].push_back(entry);
  }
  const std::string text = manifest.dump();

  out.write(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& entry : checkpoint.networks) {
    const auto& params = entry.net.params;
    for (std::size_t i = 0; i < params.layers(); ++i) {
      const auto& w = params.weights[i];
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) put_f32(out, w(r, c));
      }
      for (Eigen::Index r = 0; r < params.biases[i].size(); ++r) put_f32(out, params.biases[i](r));
    }
  }
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto length = get_le<std::uint64_t>(in);
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) {
    throw std::runtime_error("checkpoint: truncated manifest");
  }
  const nlohmann::json manifest = nlohmann::json::parse(text);

  Checkpoint checkpoint;
  checkpoint.metadata_json = manifest.at("metadata").dump();
  for (const auto& entry : manifest.at("networks")) {
    NetworkF net;
    net.sizes = entry.at("sizes").get<std::vector<int>>();
    for (const auto& a : entry.at("activations")) {
      net.activations.push_back(parse_activation(a.get<std::string>()));
    }
    if (net.sizes.size() < 2 || net.activations.size() != net.sizes.size() - 1) {
      throw std::runtime_error("checkpoint: inconsistent layer manifest");
    }
    for (std::size_t i = 0; i < net.activations.size(); ++i) {
      Matrix<float> w(net.sizes[i + 1], net.sizes[i]);
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = get_f32(in);
      }
      Vector<float> b(net.sizes[i + 1]);
      for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = get_f32(in);
      net.params.weights.push_back(std::move(w));
      net.params.biases.push_back(std::move(b));
    }
    net.validate();
    checkpoint.networks.push_back({entry.at("name").get<std::string>(), std::move(net)});
  }
  return checkpoint;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_checkpoint(out, checkpoint);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace seqbed::nn
