#include "tgnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace tgnet {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const char* primitive_name(Primitive kind) {
  switch (kind) {
    case Primitive::matmul: return "matmul";
    case Primitive::add: return "add";
    case Primitive::mul: return "mul";
    case Primitive::sigmoid: return "sigmoid";
    case Primitive::tanh: return "tanh";
    case Primitive::softmax: return "softmax";
    case Primitive::concat: return "concat";
    case Primitive::slice: return "slice";
    case Primitive::gather: return "gather";
    case Primitive::scale: return "scale";
    case Primitive::sum: return "sum";
    case Primitive::log: return "log";
  }
  return "?";
}

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

[[noreturn]] void shape_fail(Primitive kind, const Shape& a, const Shape& b,
                             const std::string& why = "") {
  std::string msg = std::string(primitive_name(kind)) + ": shape mismatch " + shape_str(a) +
                    " vs " + shape_str(b);
  if (!why.empty()) msg += " (" + why + ")";
  throw ShapeError(msg);
}

template <typename T>
Tape<T>* common_tape(Primitive kind, std::span<const Tensor<T>> inputs) {
  Tape<T>* tape = nullptr;
  for (const auto& t : inputs) {
    if (!t.tracked()) continue;
    if (tape && tape != t.tape()) {
      throw std::logic_error(std::string(primitive_name(kind)) +
                             ": inputs recorded on different tapes");
    }
    tape = t.tape();
  }
  return tape;
}

template <typename T>
Tensor<T> finish(Primitive kind, std::span<const Tensor<T>> inputs, PrimitiveAttrs attrs,
                 Shape shape, std::vector<T> values) {
  for (T v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(primitive_name(kind)) + ": non-finite output");
    }
  }
  Tensor<T> out(std::move(shape), std::move(values));
  if (Tape<T>* tape = common_tape(kind, inputs)) {
    return tape->record(kind, inputs, std::move(attrs), std::move(out));
  }
  return out;
}

void require_rank2(Primitive kind, const Shape& s) {
  if (s.size() != 2) {
    throw ShapeError(std::string(primitive_name(kind)) + ": expected rank-2 tensor, got " +
                     shape_str(s));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
  if (shape_.empty()) throw ShapeError("tensor: empty shape");
  for (std::size_t e : shape_) {
    if (e == 0) throw ShapeError("tensor: zero extent in " + shape_str(shape_));
  }
  if (product(shape_) != values.size()) {
    throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(shape_));
  }
  data_ = std::make_shared<std::vector<T>>(std::move(values));
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  return filled(std::move(shape), T{0});
}

template <typename T>
Tensor<T> Tensor<T>::filled(Shape shape, T value) {
  const std::size_t n = product(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value));
}

template <typename T>
Tensor<T> Tensor<T>::row(std::vector<T> values) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  return shape_.size() == 2 ? shape_[0] : 1;
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  return shape_.empty() ? 0 : shape_.back();
}

template <typename T>
std::span<const T> Tensor<T>::values() const {
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

template <typename T>
std::span<T> Tensor<T>::mutable_values() {
  if (!data_) return {};
  if (data_.use_count() > 1) data_ = std::make_shared<std::vector<T>>(*data_);
  return {data_->data(), data_->size()};
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape_));
  return (*data_)[0];
}

template <typename T>
T Tensor<T>::at(std::size_t r, std::size_t c) const {
  if (shape_.size() != 2 || r >= shape_[0] || c >= shape_[1]) {
    throw std::out_of_range("at: index out of range for " + shape_str(shape_));
  }
  return (*data_)[r * shape_[1] + c];
}

template <typename T>
Tensor<T> Tensor<T>::detached() const {
  Tensor out = *this;
  out.tape_ = nullptr;
  out.node_ = 0;
  return out;
}

// ---------------------------------------------------------------------------
// Gradients / Tape

template <typename T>
const Tensor<T>& Gradients<T>::of(const Tensor<T>& tracked) const {
  if (!tracked.tracked() || tracked.node() >= by_node_.size()) {
    throw std::invalid_argument("gradients: tensor is not a node of this tape");
  }
  return by_node_[tracked.node()];
}

template <typename T>
NodeId Tape<T>::new_node(const Shape& shape) {
  node_shapes_.push_back(shape);
  return static_cast<NodeId>(node_shapes_.size() - 1);
}

template <typename T>
Tensor<T> Tape<T>::leaf(const Tensor<T>& value) {
  if (value.tracked()) throw std::logic_error("tape: leaf from an already tracked tensor");
  Tensor<T> out = value;
  out.tape_ = this;
  out.node_ = new_node(value.shape());
  return out;
}

template <typename T>
Tensor<T> Tape<T>::record(Primitive kind, std::span<const Tensor<T>> inputs, PrimitiveAttrs attrs,
                          Tensor<T> output) {
  Record rec{kind, std::move(attrs), {}, {}, {}};
  rec.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    rec.inputs.push_back(in);
    rec.input_tracked.push_back(in.tracked() && in.tape() == this);
  }
  output.tape_ = this;
  output.node_ = new_node(output.shape());
  rec.output = output;
  records_.push_back(std::move(rec));
  return output;
}

template <typename T>
Gradients<T> Tape<T>::backward(const Tensor<T>& loss) const {
  if (!loss.tracked() || loss.tape() != this) {
    throw std::invalid_argument("backward: loss is not recorded on this tape");
  }
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  std::vector<std::vector<T>> grads(node_shapes_.size());
  grads[loss.node()].assign(1, T{1});
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    const auto& g = grads[it->output.node()];
    if (g.empty()) continue;
    backprop(*it, g, grads);
  }
  std::vector<Tensor<T>> out;
  out.reserve(grads.size());
  for (std::size_t n = 0; n < grads.size(); ++n) {
    if (grads[n].empty()) {
      out.push_back(Tensor<T>::zeros(node_shapes_[n]));
    } else {
      out.emplace_back(node_shapes_[n], std::move(grads[n]));
    }
  }
  return Gradients<T>(std::move(out));
}

template <typename T>
void Tape<T>::backprop(const Record& rec, const std::vector<T>& gy,
                       std::vector<std::vector<T>>& grads) const {
  auto grad_of = [&](std::size_t i) -> std::vector<T>* {
    if (!rec.input_tracked[i]) return nullptr;
    auto& g = grads[rec.inputs[i].node()];
    if (g.empty()) g.assign(rec.inputs[i].numel(), T{0});
    return &g;
  };
  const auto y = rec.output.values();

  switch (rec.kind) {
    case Primitive::matmul: {
      const auto& a = rec.inputs[0];
      const auto& b = rec.inputs[1];
      const std::size_t m = a.shape()[0], k = a.shape()[1];
      const std::size_t n = rec.output.shape()[1];
      const auto av = a.values();
      const auto bv = b.values();
      const bool tb = rec.attrs.transpose_b;
      if (auto* ga = grad_of(0)) {
        for (std::size_t i = 0; i < m; ++i) {
          const T* gyi = gy.data() + i * n;
          T* gai = ga->data() + i * k;
          if (tb) {
            // ga[i,:] += sum_j gy[i,j] * b[j,:]
            for (std::size_t j = 0; j < n; ++j) {
              const T g = gyi[j];
              if (g == T{0}) continue;
              const T* brow = bv.data() + j * k;
              for (std::size_t p = 0; p < k; ++p) gai[p] += g * brow[p];
            }
          } else {
            // ga[i,p] += dot(gy[i,:], b[p,:])
            for (std::size_t p = 0; p < k; ++p) {
              const T* brow = bv.data() + p * n;
              T acc{0};
              for (std::size_t j = 0; j < n; ++j) acc += gyi[j] * brow[j];
              gai[p] += acc;
            }
          }
        }
      }
      if (auto* gb = grad_of(1)) {
        for (std::size_t i = 0; i < m; ++i) {
          const T* ai = av.data() + i * k;
          const T* gyi = gy.data() + i * n;
          if (tb) {
            // gb[j,:] += gy[i,j] * a[i,:]
            for (std::size_t j = 0; j < n; ++j) {
              const T g = gyi[j];
              if (g == T{0}) continue;
              T* dst = gb->data() + j * k;
              for (std::size_t p = 0; p < k; ++p) dst[p] += g * ai[p];
            }
          } else {
            for (std::size_t p = 0; p < k; ++p) {
              const T ap = ai[p];
              if (ap == T{0}) continue;
              T* dst = gb->data() + p * n;
              for (std::size_t j = 0; j < n; ++j) dst[j] += ap * gyi[j];
            }
          }
        }
      }
      break;
    }
    case Primitive::add: {
      for (std::size_t i = 0; i < 2; ++i) {
        if (auto* g = grad_of(i)) {
          for (std::size_t e = 0; e < gy.size(); ++e) (*g)[e] += gy[e];
        }
      }
      break;
    }
    case Primitive::mul: {
      const auto av = rec.inputs[0].values();
      const auto bv = rec.inputs[1].values();
      if (auto* ga = grad_of(0)) {
        for (std::size_t e = 0; e < gy.size(); ++e) (*ga)[e] += gy[e] * bv[e];
      }
      if (auto* gb = grad_of(1)) {
        for (std::size_t e = 0; e < gy.size(); ++e) (*gb)[e] += gy[e] * av[e];
      }
      break;
    }
    case Primitive::sigmoid: {
      if (auto* ga = grad_of(0)) {
        for (std::size_t e = 0; e < gy.size(); ++e) (*ga)[e] += gy[e] * y[e] * (T{1} - y[e]);
      }
      break;
    }
    case Primitive::tanh: {
      if (auto* ga = grad_of(0)) {
        for (std::size_t e = 0; e < gy.size(); ++e) (*ga)[e] += gy[e] * (T{1} - y[e] * y[e]);
      }
      break;
    }
    case Primitive::softmax: {
      if (auto* ga = grad_of(0)) {
        const std::size_t n = rec.output.shape().back();
        for (std::size_t base = 0; base < gy.size(); base += n) {
          T dot{0};
          for (std::size_t j = 0; j < n; ++j) dot += gy[base + j] * y[base + j];
          for (std::size_t j = 0; j < n; ++j) (*ga)[base + j] += y[base + j] * (gy[base + j] - dot);
        }
      }
      break;
    }
    case Primitive::concat: {
      if (rec.attrs.axis == Axis::rows) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < rec.inputs.size(); ++i) {
          const std::size_t len = rec.inputs[i].numel();
          if (auto* g = grad_of(i)) {
            for (std::size_t e = 0; e < len; ++e) (*g)[e] += gy[off + e];
          }
          off += len;
        }
      } else {
        const std::size_t total = rec.output.shape().back();
        const std::size_t outer = gy.size() / total;
        std::size_t col = 0;
        for (std::size_t i = 0; i < rec.inputs.size(); ++i) {
          const std::size_t w = rec.inputs[i].shape().back();
          if (auto* g = grad_of(i)) {
            for (std::size_t o = 0; o < outer; ++o) {
              for (std::size_t j = 0; j < w; ++j) (*g)[o * w + j] += gy[o * total + col + j];
            }
          }
          col += w;
        }
      }
      break;
    }
    case Primitive::slice: {
      if (auto* ga = grad_of(0)) {
        const auto& in_shape = rec.inputs[0].shape();
        if (rec.attrs.axis == Axis::rows) {
          const std::size_t w = in_shape[1];
          const std::size_t base = rec.attrs.offset * w;
          for (std::size_t e = 0; e < gy.size(); ++e) (*ga)[base + e] += gy[e];
        } else {
          const std::size_t full = in_shape.back();
          const std::size_t len = rec.attrs.length;
          const std::size_t outer = gy.size() / len;
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t j = 0; j < len; ++j) {
              (*ga)[o * full + rec.attrs.offset + j] += gy[o * len + j];
            }
          }
        }
      }
      break;
    }
    case Primitive::gather: {
      if (auto* ga = grad_of(0)) {
        const std::size_t w = rec.inputs[0].shape()[1];
        for (std::size_t r = 0; r < rec.attrs.ids.size(); ++r) {
          const std::size_t src = rec.attrs.ids[r];
          for (std::size_t j = 0; j < w; ++j) (*ga)[src * w + j] += gy[r * w + j];
        }
      }
      break;
    }
    case Primitive::scale: {
      if (auto* ga = grad_of(0)) {
        const T f = static_cast<T>(rec.attrs.factor);
        for (std::size_t e = 0; e < gy.size(); ++e) (*ga)[e] += f * gy[e];
      }
      break;
    }
    case Primitive::sum: {
      if (auto* ga = grad_of(0)) {
        for (auto& v : *ga) v += gy[0];
      }
      break;
    }
    case Primitive::log: {
      if (auto* ga = grad_of(0)) {
        const auto av = rec.inputs[0].values();
        for (std::size_t e = 0; e < gy.size(); ++e) (*ga)[e] += gy[e] / av[e];
      }
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Primitives

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  require_rank2(Primitive::matmul, a.shape());
  require_rank2(Primitive::matmul, b.shape());
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t bk = transpose_b ? b.shape()[1] : b.shape()[0];
  const std::size_t n = transpose_b ? b.shape()[0] : b.shape()[1];
  if (k != bk) shape_fail(Primitive::matmul, a.shape(), b.shape(), transpose_b ? "a x b^T" : "");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<T> out(m * n, T{0});
  for (std::size_t i = 0; i < m; ++i) {
    T* dst = out.data() + i * n;
    if (transpose_b) {
      for (std::size_t j = 0; j < n; ++j) {
        T acc{0};
        const T* arow = av.data() + i * k;
        const T* brow = bv.data() + j * k;
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        dst[j] = acc;
      }
    } else {
      for (std::size_t p = 0; p < k; ++p) {
        const T ap = av[i * k + p];
        const T* brow = bv.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) dst[j] += ap * brow[j];
      }
    }
  }
  PrimitiveAttrs attrs;
  attrs.transpose_b = transpose_b;
  const Tensor<T> ins[] = {a, b};
  return finish<T>(Primitive::matmul, ins, std::move(attrs), {m, n}, std::move(out));
}

namespace {

template <typename T, typename F>
Tensor<T> binary(Primitive kind, const Tensor<T>& a, const Tensor<T>& b, F f) {
  if (a.shape() != b.shape()) shape_fail(kind, a.shape(), b.shape());
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<T> out(av.size());
  for (std::size_t e = 0; e < out.size(); ++e) out[e] = f(av[e], bv[e]);
  const Tensor<T> ins[] = {a, b};
  return finish<T>(kind, ins, {}, a.shape(), std::move(out));
}

template <typename T, typename F>
Tensor<T> unary(Primitive kind, const Tensor<T>& a, F f, PrimitiveAttrs attrs = {}) {
  const auto av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t e = 0; e < out.size(); ++e) out[e] = f(av[e]);
  const Tensor<T> ins[] = {a};
  return finish<T>(kind, ins, std::move(attrs), a.shape(), std::move(out));
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(Primitive::add, a, b, [](T x, T y) { return x + y; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(Primitive::mul, a, b, [](T x, T y) { return x * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary(Primitive::sigmoid, a, [](T x) {
    // Split by sign so exp never overflows.
    if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
    const T e = std::exp(x);
    return e / (T{1} + e);
  });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return unary(Primitive::tanh, a, [](T x) { return std::tanh(x); });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
  const std::size_t n = a.shape().back();
  const auto av = a.values();
  std::vector<T> out(av.size());
  for (std::size_t base = 0; base < av.size(); base += n) {
    T mx = av[base];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, av[base + j]);
    T total{0};
    for (std::size_t j = 0; j < n; ++j) {
      out[base + j] = std::exp(av[base + j] - mx);
      total += out[base + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[base + j] /= total;
  }
  const Tensor<T> ins[] = {a};
  return finish<T>(Primitive::softmax, ins, {}, a.shape(), std::move(out));
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, Axis axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  std::vector<T> out;
  Shape shape = first;
  if (axis == Axis::rows) {
    require_rank2(Primitive::concat, first);
    shape[0] = 0;
    for (const auto& p : parts) {
      require_rank2(Primitive::concat, p.shape());
      if (p.shape()[1] != first[1]) shape_fail(Primitive::concat, first, p.shape(), "rows");
      shape[0] += p.shape()[0];
    }
    out.reserve(product(shape));
    for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  } else {
    shape.back() = 0;
    for (const auto& p : parts) {
      const Shape& s = p.shape();
      if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin())) {
        shape_fail(Primitive::concat, first, s);
      }
      shape.back() += s.back();
    }
    const std::size_t outer = parts[0].numel() / first.back();
    out.reserve(product(shape));
    for (std::size_t o = 0; o < outer; ++o) {
      for (const auto& p : parts) {
        const std::size_t w = p.shape().back();
        const auto v = p.values();
        out.insert(out.end(), v.begin() + o * w, v.begin() + (o + 1) * w);
      }
    }
  }
  PrimitiveAttrs attrs;
  attrs.axis = axis;
  return finish<T>(Primitive::concat, parts, std::move(attrs), std::move(shape), std::move(out));
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t offset, std::size_t length, Axis axis) {
  const Shape& s = a.shape();
  Shape shape = s;
  std::vector<T> out;
  const auto av = a.values();
  if (axis == Axis::rows) {
    require_rank2(Primitive::slice, s);
    if (length == 0 || offset + length > s[0]) {
      throw ShapeError("slice: rows [" + std::to_string(offset) + ", " +
                       std::to_string(offset + length) + ") out of " + shape_str(s));
    }
    shape[0] = length;
    out.assign(av.begin() + offset * s[1], av.begin() + (offset + length) * s[1]);
  } else {
    if (length == 0 || offset + length > s.back()) {
      throw ShapeError("slice: columns [" + std::to_string(offset) + ", " +
                       std::to_string(offset + length) + ") out of " + shape_str(s));
    }
    shape.back() = length;
    const std::size_t full = s.back();
    const std::size_t outer = a.numel() / full;
    out.reserve(outer * length);
    for (std::size_t o = 0; o < outer; ++o) {
      out.insert(out.end(), av.begin() + o * full + offset, av.begin() + o * full + offset + length);
    }
  }
  PrimitiveAttrs attrs;
  attrs.axis = axis;
  attrs.offset = offset;
  attrs.length = length;
  const Tensor<T> ins[] = {a};
  return finish<T>(Primitive::slice, ins, std::move(attrs), std::move(shape), std::move(out));
}

template <typename T>
Tensor<T> gather(const Tensor<T>& table, std::span<const std::uint32_t> ids) {
  require_rank2(Primitive::gather, table.shape());
  if (ids.empty()) throw ShapeError("gather: empty id list");
  const std::size_t n = table.shape()[0], w = table.shape()[1];
  const auto tv = table.values();
  std::vector<T> out;
  out.reserve(ids.size() * w);
  for (std::uint32_t id : ids) {
    if (id >= n) {
      throw ShapeError("gather: id " + std::to_string(id) + " out of range for table " +
                       shape_str(table.shape()));
    }
    out.insert(out.end(), tv.begin() + id * w, tv.begin() + (id + 1) * w);
  }
  PrimitiveAttrs attrs;
  attrs.ids.assign(ids.begin(), ids.end());
  const Tensor<T> ins[] = {table};
  return finish<T>(Primitive::gather, ins, std::move(attrs), {ids.size(), w}, std::move(out));
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double factor) {
  PrimitiveAttrs attrs;
  attrs.factor = factor;
  const T f = static_cast<T>(factor);
  return unary(Primitive::scale, a, [f](T x) { return f * x; }, std::move(attrs));
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total{0};
  for (T v : a.values()) total += v;
  const Tensor<T> ins[] = {a};
  return finish<T>(Primitive::sum, ins, {}, Shape(a.rank(), 1), {total});
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  return unary(Primitive::log, a, [](T x) { return std::log(x); });
}

template <typename T>
Tensor<T> apply_primitive(Primitive kind, std::span<const Tensor<T>> inputs,
                          const PrimitiveAttrs& attrs) {
  auto arity = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw ShapeError(std::string(primitive_name(kind)) + ": expected " + std::to_string(n) +
                       " inputs, got " + std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case Primitive::matmul: arity(2); return matmul(inputs[0], inputs[1], attrs.transpose_b);
    case Primitive::add: arity(2); return add(inputs[0], inputs[1]);
    case Primitive::mul: arity(2); return mul(inputs[0], inputs[1]);
    case Primitive::sigmoid: arity(1); return sigmoid(inputs[0]);
    case Primitive::tanh: arity(1); return tanh(inputs[0]);
    case Primitive::softmax: arity(1); return softmax(inputs[0]);
    case Primitive::concat: return concat(inputs, attrs.axis);
    case Primitive::slice: arity(1); return slice(inputs[0], attrs.offset, attrs.length, attrs.axis);
    case Primitive::gather: arity(1); return gather<T>(inputs[0], attrs.ids);
    case Primitive::scale: arity(1); return scale(inputs[0], attrs.factor);
    case Primitive::sum: arity(1); return sum(inputs[0]);
    case Primitive::log: arity(1); return log(inputs[0]);
  }
  throw std::invalid_argument("apply_primitive: unknown primitive");
}

// ---------------------------------------------------------------------------

GradCheckReport finite_difference_check(const std::function<double()>& f,
                                        std::span<const NamedTensor<double>> params,
                                        std::span<const Tensor<double>> analytic,
                                        double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("finite_difference_check: epsilon <= 0");
  if (params.size() != analytic.size()) {
    throw std::invalid_argument("finite_difference_check: parameter/gradient count mismatch");
  }
  auto eval = [&f] {
    const double v = f();
    if (!std::isfinite(v)) throw NumericError("finite_difference_check: f is not finite");
    return v;
  };
  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<double>& param = *params[p].tensor;
    if (param.shape() != analytic[p].shape()) {
      shape_fail(Primitive::sum, param.shape(), analytic[p].shape(), params[p].name);
    }
    const auto grad = analytic[p].values();
    for (std::size_t e = 0; e < param.numel(); ++e) {
      const double saved = param.values()[e];
      param.mutable_values()[e] = saved + epsilon;
      const double up = eval();
      param.mutable_values()[e] = saved - epsilon;
      const double down = eval();
      param.mutable_values()[e] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double err = std::abs(grad[e] - numeric) /
                         std::max({std::abs(grad[e]), std::abs(numeric), 1e-8});
      ++report.entries_checked;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = params[p].name;
        report.worst_index = e;
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

#define TGNET_INSTANTIATE(T)                                                              \
  template class Tensor<T>;                                                               \
  template class Gradients<T>;                                                            \
  template class Tape<T>;                                                                 \
  template Tensor<T> apply_primitive(Primitive, std::span<const Tensor<T>>,               \
                                     const PrimitiveAttrs&);                              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool);                    \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> sigmoid(const Tensor<T>&);                                           \
  template Tensor<T> tanh(const Tensor<T>&);                                              \
  template Tensor<T> softmax(const Tensor<T>&);                                           \
  template Tensor<T> concat(std::span<const Tensor<T>>, Axis);                            \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, Axis);             \
  template Tensor<T> gather(const Tensor<T>&, std::span<const std::uint32_t>);            \
  template Tensor<T> scale(const Tensor<T>&, double);                                     \
  template Tensor<T> sum(const Tensor<T>&);                                               \
  template Tensor<T> log(const Tensor<T>&);

TGNET_INSTANTIATE(float)
TGNET_INSTANTIATE(double)

#undef TGNET_INSTANTIATE

}  // namespace tgnet
