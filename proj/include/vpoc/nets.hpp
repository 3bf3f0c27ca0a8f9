#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vpoc/errors.hpp"

namespace vpoc::rng {
class Stream;
}

namespace vpoc::nets {

// Dense row-major tensor. Training runs in float; gradient verification
// instantiates the same code in double.
template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    std::size_t n = 1;
    for (int e : shape) {
      if (e < 1) throw ShapeError("tensor extents must be positive");
      n *= static_cast<std::size_t>(e);
    }
    data.assign(n, T(0));
  }

  std::size_t size() const { return data.size(); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
};

enum class Activation { Linear, Tanh };
enum class LayerKind { Dense, Conv };

// One layer of a straight-line network. Conv layers are fixed 3x3 stride-2
// with zero padding chosen so out = ceil(in / 2) per spatial dim.
struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  Activation act = Activation::Linear;
  // Conv geometry.
  int in_c = 0, in_h = 0, in_w = 0;
  int out_c = 0, out_h = 0, out_w = 0;
  // Dense geometry. in_dim counts the auxiliary input when concat_aux is set.
  int in_dim = 0, out_dim = 0;
  // Dense only: the layer input is [previous output, auxiliary vector].
  bool concat_aux = false;
  // Output activation scaling: y = out_scale * act(z).
  double out_scale = 1.0;
  // Initialize from the small uniform range used for output layers.
  bool final_init = false;
};

// Trunk of the network ahead of the fully connected stack: either a conv
// pyramid over an image or a flat feature vector.
struct TrunkSpec {
  bool conv = false;
  int in_c = 3, in_h = 64, in_w = 64;  // conv mode
  int feat_dim = 0;                    // flat mode
  int conv_channels = 8;
  int conv_layers = 5;
};

struct NetSpec {
  std::vector<LayerSpec> layers;
  int aux_dim = 0;

  // Stable architecture descriptor; checkpoints must match it exactly.
  std::string signature() const;
};

// Builds trunk + hidden dense layers (tanh) + output layer. The auxiliary
// vector is concatenated at the first dense layer.
NetSpec make_net_spec(const TrunkSpec& trunk, const std::vector<int>& hidden,
                      int aux_dim, int out_dim, Activation out_act,
                      double out_scale);

template <class T>
struct Network {
  NetSpec spec;
  // Two tensors per layer: weight, bias.
  std::vector<Tensor<T>> params;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for hidden layers and
// uniform(-3e-3, 3e-3) where final_init is set, weights and biases alike.
template <class T>
Network<T> build_network(const NetSpec& spec, rng::Stream& rs);

template <class T>
struct ForwardCache {
  Tensor<T> trunk_in, aux_in;
  std::vector<Tensor<T>> inputs;  // per-layer input after any concatenation
  std::vector<Tensor<T>> act;     // per-layer output
};

// Single-sample forward pass. `aux_in` may be empty when spec.aux_dim == 0.
template <class T>
Tensor<T> forward(const Network<T>& net, const Tensor<T>& trunk_in,
                  const Tensor<T>& aux_in, ForwardCache<T>* cache = nullptr);

template <class T>
struct Gradients {
  std::vector<Tensor<T>> params;
  Tensor<T> trunk_in, aux_in;

  static Gradients zeros_like(const Network<T>& net);
  void scale(T s);
};

// Accumulates d(loss)/d(everything) into `into` given d(loss)/d(output).
// Exact reverse of forward, including the input gradients needed to chain
// networks (critic-through-action, actor-through-critic).
template <class T>
void backward(const Network<T>& net, const ForwardCache<T>& cache,
              const Tensor<T>& d_out, Gradients<T>& into);

// Adds lambda * w to every weight gradient (biases untouched).
template <class T>
void add_weight_decay(Gradients<T>& grads, const Network<T>& net,
                      double lambda);

template <class T>
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long step = 0;
  std::vector<Tensor<T>> m, v;

  static AdamState init_like(const Network<T>& net, double lr);
};

// Bias-corrected Adam: p -= lr * m_hat / (sqrt(v_hat) + eps). Rejects
// non-finite gradients with NumericsError before touching any state.
template <class T>
void adam_step(AdamState<T>& st, std::vector<Tensor<T>>& params,
               const std::vector<Tensor<T>>& grads);

// target = (1 - tau) * target + tau * source, elementwise.
template <class T>
void polyak_update(Network<T>& target, const Network<T>& source, double tau);

// Container checkpoint: little-endian binary, "VPOC" magic, u16 version,
// length-prefixed JSON metadata, then length-prefixed f32 tensors. The f32
// payload round-trips bit-exactly.
struct Checkpoint {
  std::string metadata;  // JSON text
  std::vector<Tensor<float>> tensors;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vpoc::nets
