#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tgnet/tensor.hpp"

namespace tgnet {

using Rng = std::mt19937_64;

// Per-position flags, nonzero = real token. An empty mask means all valid.
using ValidMask = std::span<const std::uint8_t>;

// Uniform samples in [-range, range], drawn in row-major order as doubles so
// float and double builds from one seed agree up to rounding.
template <typename T>
Tensor<T> uniform_tensor(Shape shape, double range, Rng& rng);

/// Row-vector GRU: inputs and states are [1, width]; input matrices are
/// [input, hidden], recurrent matrices [hidden, hidden], biases [1, hidden].
///   z  = sigmoid(x W_z + h U_z + b_z)
///   r  = sigmoid(x W_r + h U_r + b_r)
///   h~ = tanh(x W_h + (r * h) U_h + b_h)
///   h' = (1 - z) * h + z * h~
template <typename T>
struct GruParams {
  Tensor<T> w_z, u_z, b_z;
  Tensor<T> w_r, u_r, b_r;
  Tensor<T> w_h, u_h, b_h;

  std::size_t input_width() const { return w_z.shape()[0]; }
  std::size_t hidden_width() const { return u_z.shape()[0]; }

  static GruParams zeros(std::size_t input, std::size_t hidden);
  // Matrices uniform in [-range, range]; biases start at zero.
  static GruParams uniform(std::size_t input, std::size_t hidden, double range, Rng& rng);

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    visit_impl(*this, prefix, f);
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    visit_impl(*this, prefix, f);
  }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& s, const std::string& prefix, F& f) {
    f(prefix + ".W_z", s.w_z);
    f(prefix + ".U_z", s.u_z);
    f(prefix + ".b_z", s.b_z);
    f(prefix + ".W_r", s.w_r);
    f(prefix + ".U_r", s.u_r);
    f(prefix + ".b_r", s.b_r);
    f(prefix + ".W_h", s.w_h);
    f(prefix + ".U_h", s.u_h);
    f(prefix + ".b_h", s.b_h);
  }
};

template <typename T>
struct AttentionParams {
  Tensor<T> w;  // [d, d]

  std::size_t width() const { return w.shape()[0]; }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".W", w);
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".W", w);
  }
};

template <typename T>
Tensor<T> gru_cell_step(const GruParams<T>& params, const Tensor<T>& x, const Tensor<T>& h_prev);

template <typename T>
struct BiGruOutput {
  Tensor<T> states;          // [L, 2h], row i = [forward_i ; backward_i]
  Tensor<T> last_forward;    // forward state after the final position, [1, h]
  Tensor<T> first_backward;  // backward state at position 0, [1, h]
};

/// Runs fwd left-to-right and bwd right-to-left over the rows of `inputs`
/// ([L, input]) from zero initial states. `valid` flags real tokens (empty
/// means all valid); invalid positions pass the running state through.
template <typename T>
BiGruOutput<T> bigru_encode(const GruParams<T>& fwd, const GruParams<T>& bwd,
                            const Tensor<T>& inputs, ValidMask valid = {});

template <typename T>
struct AttentionResult {
  Tensor<T> context;  // [q, d]
  Tensor<T> weights;  // [q, L]
};

/// s = query W key^T for every (query row, key row); weights are a softmax of
/// s over keys with invalid keys pushed to -1e9; context = weights x keys.
template <typename T>
AttentionResult<T> bilinear_attention(const Tensor<T>& queries, const Tensor<T>& keys,
                                      const AttentionParams<T>& params,
                                      ValidMask key_valid = {});

// Inverted dropout. Identity when !training or rate == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, Rng& rng);

}  // namespace tgnet
