#include "exactk/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "exactk/errors.hpp"

namespace exactk::numcore {

namespace {

using NodePtr = std::shared_ptr<TensorNode>;

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw ContractViolation(std::string(op) + ": " + detail);
}

std::string shapes(const Tensor& a, const Tensor& b) {
  return shape_string(a.shape()) + " vs " + shape_string(b.shape());
}

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

std::vector<double>& grad_of(TensorNode& node) {
  if (node.grad.empty()) node.grad.assign(node.data.size(), 0.0);
  return node.grad;
}

// Registers `fn` on the active tape. `fn` runs only once the output has
// received some gradient.
Tensor finish(Tensor out, bool record, const char* op, std::function<void(const std::vector<double>&)> fn) {
  if (!record) return out;
  out.node()->requires_grad = true;
  NodePtr out_node = out.node();
  active_tape()->record(op, [out_node, fn = std::move(fn)]() {
    if (out_node->grad.empty()) return;
    fn(out_node->grad);
  });
  return out;
}

void require_defined(const char* op, const Tensor& t) {
  if (!t.defined()) shape_error(op, "undefined input");
}

// Row broadcast: b has exactly a.cols() elements and a single row.
bool is_row_broadcast(const Tensor& a, const Tensor& b) {
  return b.size() == a.cols() && b.rows() == 1 && a.rows() >= 1;
}

template <typename Fwd, typename Deriv>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
  require_defined(op, x);
  std::vector<double> out(x.size());
  auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xs[i]);
  bool record = should_record({&x});
  Tensor result(x.shape(), std::move(out));
  NodePtr xn = x.node();
  NodePtr yn = result.node();
  return finish(result, record, op, [xn, yn, deriv](const std::vector<double>& gy) {
    if (!xn->requires_grad) return;
    auto& gx = grad_of(*xn);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * deriv(xn->data[i], yn->data[i]);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined("matmul", a);
  require_defined("matmul", b);
  if (a.rank() != 2 || b.rank() != 2) shape_error("matmul", "expects rank-2 operands, got " + shapes(a, b));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) shape_error("matmul", "inner dimensions differ, " + shapes(a, b));
  std::vector<double> out(m * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  bool record = should_record({&a, &b});
  NodePtr an = a.node(), bn = b.node();
  return finish(Tensor({m, n}, std::move(out)), record, "matmul", [an, bn, m, k, n](const std::vector<double>& gy) {
    if (an->requires_grad) {
      auto& ga = grad_of(*an);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += gy[i * n + j] * bn->data[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (bn->requires_grad) {
      auto& gb = grad_of(*bn);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double av = an->data[i * k + p];
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * gy[i * n + j];
        }
      }
    }
  });
}

namespace {

template <bool Subtract>
Tensor add_impl(const char* op, const Tensor& a, const Tensor& b) {
  require_defined(op, a);
  require_defined(op, b);
  const bool same = a.shape() == b.shape();
  const bool bcast = !same && is_row_broadcast(a, b);
  if (!same && !bcast) shape_error(op, "incompatible shapes " + shapes(a, b));
  const double sign = Subtract ? -1.0 : 1.0;
  std::vector<double> out(a.data().begin(), a.data().end());
  const std::size_t cols = a.cols();
  auto bs = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += sign * bs[bcast ? i % cols : i];
  bool record = should_record({&a, &b});
  NodePtr an = a.node(), bn = b.node();
  return finish(Tensor(a.shape(), std::move(out)), record, op, [an, bn, bcast, cols, sign](const std::vector<double>& gy) {
    if (an->requires_grad) {
      auto& ga = grad_of(*an);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    }
    if (bn->requires_grad) {
      auto& gb = grad_of(*bn);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[bcast ? i % cols : i] += sign * gy[i];
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_impl<false>("add", a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_impl<true>("sub", a, b); }

Tensor elementwise_mul(const Tensor& a, const Tensor& b) {
  require_defined("elementwise_mul", a);
  require_defined("elementwise_mul", b);
  const bool same = a.shape() == b.shape();
  const bool bcast = !same && is_row_broadcast(a, b);
  if (!same && !bcast) shape_error("elementwise_mul", "incompatible shapes " + shapes(a, b));
  const std::size_t cols = a.cols();
  std::vector<double> out(a.size());
  auto as = a.data();
  auto bs = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] * bs[bcast ? i % cols : i];
  bool record = should_record({&a, &b});
  NodePtr an = a.node(), bn = b.node();
  return finish(Tensor(a.shape(), std::move(out)), record, "elementwise_mul",
                [an, bn, bcast, cols](const std::vector<double>& gy) {
                  if (an->requires_grad) {
                    auto& ga = grad_of(*an);
                    for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bn->data[bcast ? i % cols : i];
                  }
                  if (bn->requires_grad) {
                    auto& gb = grad_of(*bn);
                    for (std::size_t i = 0; i < gy.size(); ++i) gb[bcast ? i % cols : i] += gy[i] * an->data[i];
                  }
                });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) shape_error("concat", "no inputs");
  if (axis != 0 && axis != 1) shape_error("concat", "axis must be 0 or 1, got " + std::to_string(axis));
  for (const auto& p : parts) require_defined("concat", p);
  std::size_t rows = 0, cols = 0;
  if (axis == 0) {
    cols = parts[0].cols();
    for (const auto& p : parts) {
      if (p.cols() != cols) shape_error("concat", "column counts differ, " + shapes(parts[0], p));
      rows += p.rows();
    }
  } else {
    rows = parts[0].rows();
    for (const auto& p : parts) {
      if (p.rows() != rows) shape_error("concat", "row counts differ, " + shapes(parts[0], p));
      cols += p.cols();
    }
  }
  std::vector<double> out(rows * cols);
  std::vector<NodePtr> nodes;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  bool record = false;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    offsets.push_back(offset);
    record = record || p.requires_grad();
    auto d = p.data();
    if (axis == 0) {
      std::copy(d.begin(), d.end(), out.begin() + static_cast<std::ptrdiff_t>(offset * cols));
      offset += p.rows();
    } else {
      const std::size_t pc = p.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy(d.begin() + static_cast<std::ptrdiff_t>(r * pc), d.begin() + static_cast<std::ptrdiff_t>((r + 1) * pc),
                  out.begin() + static_cast<std::ptrdiff_t>(r * cols + offset));
      }
      offset += pc;
    }
  }
  record = record && active_tape() != nullptr;
  return finish(Tensor({rows, cols}, std::move(out)), record, "concat",
                [nodes, offsets, axis, rows, cols](const std::vector<double>& gy) {
                  for (std::size_t k = 0; k < nodes.size(); ++k) {
                    auto& n = *nodes[k];
                    if (!n.requires_grad) continue;
                    auto& g = grad_of(n);
                    if (axis == 0) {
                      const std::size_t base = offsets[k] * cols;
                      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[base + i];
                    } else {
                      const std::size_t pc = n.shape.back();
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t c = 0; c < pc; ++c) g[r * pc + c] += gy[r * cols + offsets[k] + c];
                      }
                    }
                  }
                });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& x) {
  require_defined("log", x);
  for (double v : x.data()) {
    if (!(v > 0.0)) shape_error("log", "non-positive input " + std::to_string(v));
  }
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor softmax_lastdim(const Tensor& x) {
  require_defined("softmax_lastdim", x);
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(x.size());
  auto xs = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xs.data() + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  bool record = should_record({&x});
  Tensor result(x.shape(), std::move(out));
  NodePtr xn = x.node(), yn = result.node();
  return finish(result, record, "softmax_lastdim", [xn, yn, rows, cols](const std::vector<double>& gy) {
    if (!xn->requires_grad) return;
    auto& gx = grad_of(*xn);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = yn->data.data() + r * cols;
      const double* g = gy.data() + r * cols;
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[c] * y[c];
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += y[c] * (g[c] - dot);
    }
  });
}

Tensor log_softmax_lastdim(const Tensor& x) {
  require_defined("log_softmax_lastdim", x);
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> out(x.size());
  auto xs = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xs.data() + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) total += std::exp(in[c] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) o[c] = in[c] - lse;
  }
  bool record = should_record({&x});
  Tensor result(x.shape(), std::move(out));
  NodePtr xn = x.node(), yn = result.node();
  return finish(result, record, "log_softmax_lastdim", [xn, yn, rows, cols](const std::vector<double>& gy) {
    if (!xn->requires_grad) return;
    auto& gx = grad_of(*xn);
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c) total += gy[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        gx[r * cols + c] += gy[r * cols + c] - std::exp(yn->data[r * cols + c]) * total;
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double epsilon) {
  require_defined("layer_norm", x);
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gain.size() != cols || bias.size() != cols) {
    shape_error("layer_norm", "gain/bias must have " + std::to_string(cols) + " entries, got " +
                                  shapes(gain, bias));
  }
  std::vector<double> out(x.size()), xhat(x.size()), inv_std(rows);
  auto xs = x.data();
  auto gs = gain.data();
  auto bs = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xs.data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += in[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t c = 0; c < cols; ++c) {
      xhat[r * cols + c] = (in[c] - mu) * inv_std[r];
      out[r * cols + c] = xhat[r * cols + c] * gs[c] + bs[c];
    }
  }
  bool record = should_record({&x, &gain, &bias});
  NodePtr xn = x.node(), gn = gain.node(), bn = bias.node();
  return finish(Tensor(x.shape(), std::move(out)), record, "layer_norm",
                [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
                 cols](const std::vector<double>& gy) {
                  if (gn->requires_grad) {
                    auto& gg = grad_of(*gn);
                    for (std::size_t i = 0; i < gy.size(); ++i) gg[i % cols] += gy[i] * xhat[i];
                  }
                  if (bn->requires_grad) {
                    auto& gb = grad_of(*bn);
                    for (std::size_t i = 0; i < gy.size(); ++i) gb[i % cols] += gy[i];
                  }
                  if (!xn->requires_grad) return;
                  auto& gx = grad_of(*xn);
                  const double n = static_cast<double>(cols);
                  for (std::size_t r = 0; r < rows; ++r) {
                    double mean_d = 0.0, mean_dx = 0.0;
                    for (std::size_t c = 0; c < cols; ++c) {
                      const double d = gy[r * cols + c] * gn->data[c];
                      mean_d += d;
                      mean_dx += d * xhat[r * cols + c];
                    }
                    mean_d /= n;
                    mean_dx /= n;
                    for (std::size_t c = 0; c < cols; ++c) {
                      const double d = gy[r * cols + c] * gn->data[c];
                      gx[r * cols + c] += inv_std[r] * (d - mean_d - xhat[r * cols + c] * mean_dx);
                    }
                  }
                });
}

Tensor sum(const Tensor& x) {
  require_defined("sum", x);
  double total = 0.0;
  for (double v : x.data()) total += v;
  bool record = should_record({&x});
  NodePtr xn = x.node();
  return finish(Tensor::scalar(total), record, "sum", [xn](const std::vector<double>& gy) {
    if (!xn->requires_grad) return;
    auto& gx = grad_of(*xn);
    for (auto& g : gx) g += gy[0];
  });
}

Tensor mean(const Tensor& x) {
  require_defined("mean", x);
  const double n = static_cast<double>(x.size());
  double total = 0.0;
  for (double v : x.data()) total += v;
  bool record = should_record({&x});
  NodePtr xn = x.node();
  return finish(Tensor::scalar(total / n), record, "mean", [xn, n](const std::vector<double>& gy) {
    if (!xn->requires_grad) return;
    auto& gx = grad_of(*xn);
    for (auto& g : gx) g += gy[0] / n;
  });
}

Tensor transpose(const Tensor& x) {
  require_defined("transpose", x);
  if (x.rank() != 2) shape_error("transpose", "expects rank 2, got " + shape_string(x.shape()));
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  std::vector<double> out(x.size());
  auto xs = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xs[i * c + j];
  bool record = should_record({&x});
  NodePtr xn = x.node();
  return finish(Tensor({c, r}, std::move(out)), record, "transpose", [xn, r, c](const std::vector<double>& gy) {
    if (!xn->requires_grad) return;
    auto& gx = grad_of(*xn);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += gy[j * r + i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined("reshape", x);
  if (shape_size(shape) != x.size()) {
    shape_error("reshape", "cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  bool record = should_record({&x});
  NodePtr xn = x.node();
  return finish(Tensor(std::move(shape), std::move(out)), record, "reshape", [xn](const std::vector<double>& gy) {
    if (!xn->requires_grad) return;
    auto& gx = grad_of(*xn);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_defined("gather_rows", x);
  if (rows.empty()) shape_error("gather_rows", "no rows requested");
  const std::size_t cols = x.cols(), nrows = x.rows();
  std::vector<double> out(rows.size() * cols);
  auto xs = x.data();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= nrows) {
      shape_error("gather_rows", "row " + std::to_string(rows[k]) + " out of range for " + shape_string(x.shape()));
    }
    std::copy_n(xs.begin() + static_cast<std::ptrdiff_t>(rows[k] * cols), cols,
                out.begin() + static_cast<std::ptrdiff_t>(k * cols));
  }
  bool record = should_record({&x});
  NodePtr xn = x.node();
  std::vector<std::size_t> index(rows.begin(), rows.end());
  return finish(Tensor({rows.size(), cols}, std::move(out)), record, "gather_rows",
                [xn, index = std::move(index), cols](const std::vector<double>& gy) {
                  if (!xn->requires_grad) return;
                  auto& gx = grad_of(*xn);
                  for (std::size_t k = 0; k < index.size(); ++k)
                    for (std::size_t c = 0; c < cols; ++c) gx[index[k] * cols + c] += gy[k * cols + c];
                });
}

Tensor pick(const Tensor& x, std::size_t index) {
  require_defined("pick", x);
  if (index >= x.size()) {
    shape_error("pick", "index " + std::to_string(index) + " out of range for " + shape_string(x.shape()));
  }
  bool record = should_record({&x});
  NodePtr xn = x.node();
  return finish(Tensor::scalar(x[index]), record, "pick", [xn, index](const std::vector<double>& gy) {
    if (!xn->requires_grad) return;
    grad_of(*xn)[index] += gy[0];
  });
}

Tensor masked_fill(const Tensor& x, const std::vector<bool>& mask, double value) {
  require_defined("masked_fill", x);
  const std::size_t cols = x.cols();
  if (mask.size() != cols) {
    shape_error("masked_fill", "mask of length " + std::to_string(mask.size()) + " vs " + shape_string(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i % cols]) out[i] = value;
  bool record = should_record({&x});
  NodePtr xn = x.node();
  return finish(Tensor(x.shape(), std::move(out)), record, "masked_fill",
                [xn, mask, cols](const std::vector<double>& gy) {
                  if (!xn->requires_grad) return;
                  auto& gx = grad_of(*xn);
                  for (std::size_t i = 0; i < gx.size(); ++i)
                    if (!mask[i % cols]) gx[i] += gy[i];
                });
}

Tensor binary_cross_entropy_with_logits(const Tensor& logit, double target) {
  require_defined("binary_cross_entropy_with_logits", logit);
  if (logit.size() != 1) shape_error("binary_cross_entropy_with_logits", "logit must be scalar");
  const double z = logit.item();
  const double loss = std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
  bool record = should_record({&logit});
  NodePtr zn = logit.node();
  return finish(Tensor::scalar(loss), record, "binary_cross_entropy_with_logits",
                [zn, z, target](const std::vector<double>& gy) {
                  if (!zn->requires_grad) return;
                  const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
                  grad_of(*zn)[0] += gy[0] * (s - target);
                });
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::concat: return "concat";
    case OpKind::relu: return "relu";
    case OpKind::tanh: return "tanh";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::softmax_lastdim: return "softmax_lastdim";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::elementwise_mul: return "elementwise_mul";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::log: return "log";
    case OpKind::scale: return "scale";
  }
  return "unknown";
}

Tensor forward_op(OpKind kind, std::span<const Tensor> inputs) {
  auto arity = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw ContractViolation(std::string(op_name(kind)) + ": expects " + std::to_string(n) + " inputs, got " +
                              std::to_string(inputs.size()));
    }
  };
  switch (kind) {
    case OpKind::matmul: arity(2); return matmul(inputs[0], inputs[1]);
    case OpKind::add: arity(2); return add(inputs[0], inputs[1]);
    case OpKind::concat: return concat(inputs, 1);
    case OpKind::relu: arity(1); return relu(inputs[0]);
    case OpKind::tanh: arity(1); return tanh(inputs[0]);
    case OpKind::sigmoid: arity(1); return sigmoid(inputs[0]);
    case OpKind::softmax_lastdim: arity(1); return softmax_lastdim(inputs[0]);
    case OpKind::layer_norm: arity(3); return layer_norm(inputs[0], inputs[1], inputs[2]);
    case OpKind::elementwise_mul: arity(2); return elementwise_mul(inputs[0], inputs[1]);
    case OpKind::sum: arity(1); return sum(inputs[0]);
    case OpKind::mean: arity(1); return mean(inputs[0]);
    case OpKind::log: arity(1); return log(inputs[0]);
    case OpKind::scale: arity(2); return scale(inputs[0], inputs[1].item());
  }
  throw ContractViolation("forward_op: unknown kind");
}

}  // namespace exactk::numcore
