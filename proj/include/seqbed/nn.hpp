#ifndef SEQBED_NN_HPP_
#define SEQBED_NN_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "seqbed/prob.hpp"

namespace seqbed::nn {

enum class Activation { relu, tanh, softplus, identity };

std::string_view to_string(Activation activation);
Activation parse_activation(std::string_view name);

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Weight matrices (out x in) and bias vectors, one pair per layer. Array
/// names are `layer<i>.weight` and `layer<i>.bias`.
template <typename Scalar>
struct ParameterSet {
  std::vector<Matrix<Scalar>> weights;
  std::vector<Vector<Scalar>> biases;

  std::size_t layers() const { return weights.size(); }
  std::size_t scalar_count() const;
  bool same_shape(const ParameterSet& other) const;
  bool all_finite() const;
  ParameterSet zeros_like() const;
};

/// Gradient of a scalar with respect to every entry of a ParameterSet.
template <typename Scalar>
struct Gradient {
  ParameterSet<Scalar> d;

  Gradient& operator+=(const Gradient& other);
  Gradient& operator*=(Scalar factor);
};

/// Fully connected feed-forward network. `activations[i]` follows layer i.
template <typename Scalar>
struct Network {
  std::vector<int> sizes;
  std::vector<Activation> activations;
  ParameterSet<Scalar> params;

  int input_dim() const { return sizes.front(); }
  int output_dim() const { return sizes.back(); }
  void validate() const;

  template <typename Other>
  Network<Other> cast() const;
};

template <typename Scalar>
template <typename Other>
Network<Other> Network<Scalar>::cast() const {
  Network<Other> out;
  out.sizes = sizes;
  out.activations = activations;
  for (const auto& w : params.weights) out.params.weights.push_back(w.template cast<Other>());
  for (const auto& b : params.biases) out.params.biases.push_back(b.template cast<Other>());
  return out;
}

using NetworkF = Network<float>;
using NetworkD = Network<double>;

/// Uniform fan-in initialisation U(-1/sqrt(fan_in), 1/sqrt(fan_in)); the last
/// layer is additionally multiplied by `last_layer_scale`.
template <typename Scalar>
Network<Scalar> make_network(std::vector<int> sizes, std::vector<Activation> activations,
                             prob::RngStream& rng, double last_layer_scale = 1.0);

/// Layer inputs and pre-activations recorded by a batched forward pass.
template <typename Scalar>
struct ForwardTrace {
  std::vector<Matrix<Scalar>> inputs;  // inputs[i] feeds layer i
  std::vector<Matrix<Scalar>> pre;     // pre-activation of layer i
};

/// Batched forward pass; columns are samples.
template <typename Scalar>
Matrix<Scalar> forward(const Network<Scalar>& net, const Matrix<Scalar>& input,
                       ForwardTrace<Scalar>* trace = nullptr);

template <typename Scalar>
Vector<Scalar> forward(const Network<Scalar>& net, const Vector<Scalar>& input);

template <typename Scalar>
struct BackwardResult {
  Gradient<Scalar> grad;
  Matrix<Scalar> input_grad;
};

/// Reverse pass for the scalar sum_b <output_grad[:, b], output[:, b]>. With
/// `param_grads` false only the input gradient is produced.
template <typename Scalar>
BackwardResult<Scalar> backward(const Network<Scalar>& net, const ForwardTrace<Scalar>& trace,
                                const Matrix<Scalar>& output_grad, bool param_grads = true);

template <typename Scalar>
Gradient<Scalar> backward(const Network<Scalar>& net, const Vector<Scalar>& input,
                          const Vector<Scalar>& output_grad);

template <typename Scalar>
struct OptimizerState {
  ParameterSet<Scalar> first_moment;
  ParameterSet<Scalar> second_moment;
  std::int64_t step = 0;

  static OptimizerState zeros_like(const ParameterSet<Scalar>& params);
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam update. Pure: returns new parameters and state.
template <typename Scalar>
std::pair<ParameterSet<Scalar>, OptimizerState<Scalar>> adam_step(
    const ParameterSet<Scalar>& params, const Gradient<Scalar>& grad,
    const OptimizerState<Scalar>& state, double lr, const AdamHyper& hyper = {});

/// tau * online + (1 - tau) * target, elementwise.
template <typename Scalar>
ParameterSet<Scalar> polyak_update(const ParameterSet<Scalar>& target,
                                   const ParameterSet<Scalar>& online, double tau);

// Checkpoints.
//
// Layout (all integers little-endian):
//   8 bytes   magic "SQBDCKPT"
//   u32       format version
//   u64       manifest length n
//   n bytes   JSON manifest: {"version", "metadata", "networks": [{"name",
//             "sizes", "activations", "arrays": [{"name", "shape"}]}]}
//   payload   every array in manifest order as row-major little-endian f32

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedNetwork {
  std::string name;
  NetworkF net;
};

struct Checkpoint {
  std::string metadata_json = "{}";  // free-form JSON object
  std::vector<NamedNetwork> networks;

  const NetworkF& find(std::string_view name) const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace seqbed::nn

#endif  // SEQBED_NN_HPP_
