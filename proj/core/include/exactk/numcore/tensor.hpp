#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace exactk::numcore {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Storage shared by every handle to the same tensor. `grad` stays empty until
// the tensor takes part in a backward pass (parameters allocate it eagerly).
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
};

// Dense row-major float64 array with reference semantics: copies of a Tensor
// alias the same node, which is what lets the tape route gradients back to
// parameters.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor row(std::vector<double> values);
  // Leaf that accumulates gradients; the grad buffer is allocated (zeroed).
  static Tensor parameter(Shape shape, std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  // Matrix view: last extent is `cols`, everything before it folds into rows.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }

  double item() const;
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }
  double operator[](std::size_t i) const { return node_->data[i]; }

  void zero_grad();
  // Value copy that is disconnected from any tape.
  Tensor detach() const;

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

struct TapeEntry {
  const char* op;
  std::function<void()> backward;
};

// Ordered record of differentiable operations. Backward replays the entries
// in reverse and then clears the tape.
class Tape {
 public:
  void record(const char* op, std::function<void()> backward);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }
  const std::vector<TapeEntry>& entries() const { return entries_; }

 private:
  friend void backward(Tape& tape, const Tensor& loss);
  std::vector<TapeEntry> entries_;
};

// Makes `tape` the recording target for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording on the current thread (inference inside a training step).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every tensor that
// requires them. The tape is consumed.
void backward(Tape& tape, const Tensor& loss);

}  // namespace exactk::numcore
