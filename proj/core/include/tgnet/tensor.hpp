#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tgnet {

using Shape = std::vector<std::size_t>;
using NodeId = std::uint32_t;

std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Closed set of differentiable primitives. Shape rules:
//   matmul   [m,k] x [k,n] -> [m,n]; with transpose_b, [m,k] x [n,k] -> [m,n]
//   add, mul identical shapes -> same shape
//   sigmoid, tanh, log, scale: elementwise, shape preserved
//   softmax  normalizes every slice along the last axis
//   concat   along the last axis (extents of other axes equal); the rows
//            variant concatenates 2-D tensors along axis 0
//   slice    contiguous window [offset, offset+length) of the last axis, or
//            of axis 0 for the rows variant
//   gather   table [n,w], ids (each < n) -> [len(ids), w]
//   sum      all entries -> same rank, every extent 1
enum class Primitive : std::uint8_t {
  matmul,
  add,
  mul,
  sigmoid,
  tanh,
  softmax,
  concat,
  slice,
  gather,
  scale,
  sum,
  log,
};

const char* primitive_name(Primitive kind);

enum class Axis : std::uint8_t { last, rows };

struct PrimitiveAttrs {
  Axis axis = Axis::last;
  std::size_t offset = 0;
  std::size_t length = 0;
  double factor = 1.0;
  bool transpose_b = false;
  std::vector<std::uint32_t> ids;
};

template <typename T>
class Tape;

/// Dense row-major array. Values are immutable once shared; mutable_values()
/// detaches the buffer first. A tensor produced on a Tape carries the node id
/// of its record so gradients can be looked up after backward().
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, T value);
  static Tensor row(std::vector<T> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_ ? data_->size() : 0; }
  bool empty() const { return numel() == 0; }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const T> values() const;
  std::span<T> mutable_values();
  T item() const;
  T at(std::size_t r, std::size_t c) const;

  bool tracked() const { return tape_ != nullptr; }
  Tape<T>* tape() const { return tape_; }
  NodeId node() const { return node_; }
  Tensor detached() const;

 private:
  friend class Tape<T>;

  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
  Tape<T>* tape_ = nullptr;
  NodeId node_ = 0;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T>* tensor;
};

template <typename T>
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<Tensor<T>> by_node) : by_node_(std::move(by_node)) {}

  // Zero tensor for tracked leaves that never influenced the loss.
  const Tensor<T>& of(const Tensor<T>& tracked) const;
  std::size_t size() const { return by_node_.size(); }

 private:
  std::vector<Tensor<T>> by_node_;
};

/// Ordered record of primitive applications. Records are appended in
/// execution order, so inputs always precede the records that consume them
/// and backward() can walk the list in reverse.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a gradient-tracked leaf sharing the value's buffer.
  Tensor<T> leaf(const Tensor<T>& value);

  Tensor<T> record(Primitive kind, std::span<const Tensor<T>> inputs, PrimitiveAttrs attrs,
                   Tensor<T> output);

  Gradients<T> backward(const Tensor<T>& loss) const;

  std::size_t node_count() const { return node_shapes_.size(); }
  std::size_t record_count() const { return records_.size(); }

 private:
  struct Record {
    Primitive kind;
    PrimitiveAttrs attrs;
    std::vector<Tensor<T>> inputs;
    std::vector<bool> input_tracked;
    Tensor<T> output;
  };

  NodeId new_node(const Shape& shape);
  void backprop(const Record& rec, const std::vector<T>& grad_out,
                std::vector<std::vector<T>>& grads) const;

  std::vector<Record> records_;
  std::vector<Shape> node_shapes_;
  std::vector<std::int64_t> record_of_node_;
};

template <typename T>
Tensor<T> apply_primitive(Primitive kind, std::span<const Tensor<T>> inputs,
                          const PrimitiveAttrs& attrs = {});

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T>
Tensor<T> tanh(const Tensor<T>& a);
template <typename T>
Tensor<T> softmax(const Tensor<T>& a);
template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, Axis axis = Axis::last);
template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t offset, std::size_t length,
                Axis axis = Axis::last);
template <typename T>
Tensor<T> gather(const Tensor<T>& table, std::span<const std::uint32_t> ids);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, double factor);
template <typename T>
Tensor<T> sum(const Tensor<T>& a);
template <typename T>
Tensor<T> log(const Tensor<T>& a);

// Composites over the primitive set.
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, scale(b, -1.0));
}

template <typename T>
Tensor<T> concat2(const Tensor<T>& a, const Tensor<T>& b, Axis axis = Axis::last) {
  const Tensor<T> parts[] = {a, b};
  return concat<T>(parts, axis);
}

template <typename T>
Tensor<T> row_of(const Tensor<T>& m, std::size_t r) {
  return slice(m, r, 1, Axis::rows);
}

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
};

/// Compares analytic gradients against central differences of f, perturbing
/// each parameter entry in place by +/- epsilon. Relative error per entry is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckReport finite_difference_check(const std::function<double()>& f,
                                        std::span<const NamedTensor<double>> params,
                                        std::span<const Tensor<double>> analytic,
                                        double epsilon);

}  // namespace tgnet
