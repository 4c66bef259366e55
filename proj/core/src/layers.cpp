#include "tgnet/layers.hpp"

#include <algorithm>
#include <stdexcept>

namespace tgnet {

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double range, Rng& rng) {
  std::uniform_real_distribution<double> dist(-range, range);
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  std::vector<T> values(n);
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(values));
}

template <typename T>
GruParams<T> GruParams<T>::zeros(std::size_t input, std::size_t hidden) {
  GruParams p;
  for (auto* w : {&p.w_z, &p.w_r, &p.w_h}) *w = Tensor<T>::zeros({input, hidden});
  for (auto* u : {&p.u_z, &p.u_r, &p.u_h}) *u = Tensor<T>::zeros({hidden, hidden});
  for (auto* b : {&p.b_z, &p.b_r, &p.b_h}) *b = Tensor<T>::zeros({1, hidden});
  return p;
}

template <typename T>
GruParams<T> GruParams<T>::uniform(std::size_t input, std::size_t hidden, double range, Rng& rng) {
  GruParams p = zeros(input, hidden);
  for (auto* pair : {&p.w_z, &p.u_z, &p.w_r, &p.u_r, &p.w_h, &p.u_h}) {
    *pair = uniform_tensor<T>(pair->shape(), range, rng);
  }
  return p;
}

namespace {

template <typename T>
Tensor<T> gru_from_projections(const GruParams<T>& p, const Tensor<T>& xz, const Tensor<T>& xr,
                               const Tensor<T>& xh, const Tensor<T>& h) {
  const auto z = sigmoid(add(add(xz, matmul(h, p.u_z)), p.b_z));
  const auto r = sigmoid(add(add(xr, matmul(h, p.u_r)), p.b_r));
  const auto cand = tanh(add(add(xh, matmul(mul(r, h), p.u_h)), p.b_h));
  // (1 - z) * h + z * cand
  return add(h, mul(z, sub(cand, h)));
}

template <typename T>
void check_gru_shapes(const GruParams<T>& p, const Shape& x, const Shape& h) {
  const Shape want_h{1, p.hidden_width()};
  if (x.size() != 2 || x[1] != p.input_width()) {
    throw ShapeError("gru: input " + shape_str(x) + " vs input width " +
                     std::to_string(p.input_width()));
  }
  if (h != want_h) {
    throw ShapeError("gru: state " + shape_str(h) + " vs " + shape_str(want_h));
  }
}

}  // namespace

template <typename T>
Tensor<T> gru_cell_step(const GruParams<T>& params, const Tensor<T>& x, const Tensor<T>& h_prev) {
  check_gru_shapes(params, x.shape(), h_prev.shape());
  if (x.rows() != 1) throw ShapeError("gru: expected a single input row, got " + shape_str(x.shape()));
  return gru_from_projections(params, matmul(x, params.w_z), matmul(x, params.w_r),
                              matmul(x, params.w_h), h_prev);
}

template <typename T>
BiGruOutput<T> bigru_encode(const GruParams<T>& fwd, const GruParams<T>& bwd,
                            const Tensor<T>& inputs, ValidMask valid) {
  if (inputs.empty()) throw ShapeError("bigru: empty sequence");
  if (inputs.rank() != 2) throw ShapeError("bigru: inputs must be [L, width]");
  const std::size_t len = inputs.rows();
  if (!valid.empty() && valid.size() != len) {
    throw ShapeError("bigru: mask length " + std::to_string(valid.size()) + " vs sequence " +
                     std::to_string(len));
  }
  auto is_valid = [&](std::size_t i) { return valid.empty() || valid[i]; };

  auto run = [&](const GruParams<T>& p, bool forward, std::vector<Tensor<T>>& out) {
    Tensor<T> h = Tensor<T>::zeros({1, p.hidden_width()});
    check_gru_shapes(p, {1, inputs.cols()}, h.shape());
    const auto xz = matmul(inputs, p.w_z);
    const auto xr = matmul(inputs, p.w_r);
    const auto xh = matmul(inputs, p.w_h);
    out.assign(len, {});
    for (std::size_t step = 0; step < len; ++step) {
      const std::size_t i = forward ? step : len - 1 - step;
      if (is_valid(i)) {
        h = gru_from_projections(p, row_of(xz, i), row_of(xr, i), row_of(xh, i), h);
      }
      out[i] = h;
    }
    return h;
  };

  std::vector<Tensor<T>> f_states, b_states;
  BiGruOutput<T> result;
  result.last_forward = run(fwd, true, f_states);
  run(bwd, false, b_states);
  result.first_backward = b_states.front();
  const auto f_all = concat<T>(f_states, Axis::rows);
  const auto b_all = concat<T>(b_states, Axis::rows);
  result.states = concat2(f_all, b_all);
  return result;
}

template <typename T>
AttentionResult<T> bilinear_attention(const Tensor<T>& queries, const Tensor<T>& keys,
                                      const AttentionParams<T>& params,
                                      ValidMask key_valid) {
  if (keys.empty()) throw ShapeError("attention: no keys");
  const std::size_t n_keys = keys.rows();
  if (!key_valid.empty()) {
    if (key_valid.size() != n_keys) throw ShapeError("attention: mask length mismatch");
    if (std::none_of(key_valid.begin(), key_valid.end(), [](std::uint8_t v) { return v != 0; })) {
      throw std::invalid_argument("attention: every key is masked");
    }
  }
  auto scores = matmul(matmul(queries, params.w), keys, /*transpose_b=*/true);
  if (!key_valid.empty() &&
      std::any_of(key_valid.begin(), key_valid.end(), [](std::uint8_t v) { return v == 0; })) {
    std::vector<T> bias(scores.numel(), T{0});
    for (std::size_t q = 0; q < scores.rows(); ++q) {
      for (std::size_t j = 0; j < n_keys; ++j) {
        if (!key_valid[j]) bias[q * n_keys + j] = static_cast<T>(-1e9);
      }
    }
    scores = add(scores, Tensor<T>(scores.shape(), std::move(bias)));
  }
  AttentionResult<T> result;
  result.weights = softmax(scores);
  result.context = matmul(result.weights, keys);
  return result;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = u(rng) < rate ? T{0} : keep;
  return mul(x, Tensor<T>(x.shape(), std::move(mask)));
}

#define TGNET_INSTANTIATE(T)                                                                     \
  template Tensor<T> uniform_tensor<T>(Shape, double, Rng&);                                     \
  template struct GruParams<T>;                                                                  \
  template Tensor<T> gru_cell_step(const GruParams<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template BiGruOutput<T> bigru_encode(const GruParams<T>&, const GruParams<T>&,                 \
                                       const Tensor<T>&, ValidMask);                 \
  template AttentionResult<T> bilinear_attention(const Tensor<T>&, const Tensor<T>&,             \
                                                 const AttentionParams<T>&,                      \
                                                 ValidMask);                         \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, Rng&);

TGNET_INSTANTIATE(float)
TGNET_INSTANTIATE(double)

#undef TGNET_INSTANTIATE

}  // namespace tgnet
