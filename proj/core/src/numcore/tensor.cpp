#include "exactk/numcore/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "exactk/errors.hpp"

namespace exactk::numcore {

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data) : node_(std::make_shared<TensorNode>()) {
  if (shape.empty()) throw ContractViolation("tensor: empty shape");
  for (auto extent : shape) {
    if (extent == 0) throw ContractViolation("tensor: zero extent in shape " + shape_string(shape));
  }
  if (shape_size(shape) != data.size()) {
    throw ContractViolation("tensor: shape " + shape_string(shape) + " does not match " +
                            std::to_string(data.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::row(std::vector<double> values) {
  auto n = values.size();
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
  Tensor t(std::move(shape), std::move(data));
  t.node_->requires_grad = true;
  t.node_->grad.assign(t.size(), 0.0);
  return t;
}

std::size_t Tensor::rows() const { return size() / cols(); }

std::size_t Tensor::cols() const { return node_->shape.back(); }

double Tensor::item() const {
  if (size() != 1) throw ContractViolation("item: tensor of shape " + shape_string(shape()) + " is not a scalar");
  return node_->data[0];
}

void Tensor::zero_grad() {
  if (node_->requires_grad) {
    node_->grad.assign(node_->data.size(), 0.0);
  } else {
    node_->grad.clear();
  }
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data); }

void Tape::record(const char* op, std::function<void()> backward) {
  entries_.push_back(TapeEntry{op, std::move(backward)});
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void backward(Tape& tape, const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractViolation("backward: loss must be a scalar, got shape " +
                            (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw ContractViolation("backward: loss was not produced on the tape");
  }
  auto& node = *loss.node();
  if (node.grad.empty()) node.grad.assign(1, 0.0);
  node.grad[0] += 1.0;
  for (auto it = tape.entries_.rbegin(); it != tape.entries_.rend(); ++it) {
    it->backward();
  }
  tape.clear();
}

}  // namespace exactk::numcore
