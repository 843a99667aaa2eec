#include "price/tensor.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

namespace price {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstView = Eigen::Map<const RowMatrix>;
using View = Eigen::Map<RowMatrix>;

ConstView view(const Matrix& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}
View view(Matrix& m) { return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())}; }

[[noreturn]] void shape_mismatch(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

detail::Node& parent(detail::Node& node, std::size_t i) { return *node.parents[i]; }

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) throw ShapeError("matrix data length does not match " + shape_string(*this));
}

Matrix Matrix::row(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string shape_string(const Matrix& m) { return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")"; }

// ---------------------------------------------------------------------------
// Tensor / Tape

Tensor Tensor::parameter(Matrix value, std::string name) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->name = std::move(name);
  return Tensor(std::move(node));
}

Tensor Tensor::constant(Matrix value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.data().begin(), node_->grad.data().end(), 0.0);
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("item() needs a 1x1 tensor, got " + shape_string(value()));
  return value()[0];
}

Tensor Tape::record(Matrix value, std::vector<Tensor> parents, std::function<void(detail::Node&)> backward) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  for (const auto& p : parents) {
    node->requires_grad = node->requires_grad || p.node_->requires_grad;
    node->parents.push_back(p.node_);
  }
  if (node->requires_grad) {
    node->backward = std::move(backward);
    nodes_.push_back(node);
  } else {
    node->parents.clear();
  }
  return Tensor(std::move(node));
}

void Tape::backward(const Tensor& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ShapeError("backward needs a scalar loss, got " + shape_string(loss.value()));
  }
  if (!loss.requires_grad()) return;
  loss.node_->grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto& node = **it;
    if (node.grad.empty()) continue;  // not on a path to the loss
    node.backward(node);
  }
}

// ---------------------------------------------------------------------------
// Primitives

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_mismatch("matmul", a.value(), b.value());
  Matrix out(a.rows(), b.cols());
  view(out).noalias() = view(a.value()) * view(b.value());
  return tape.record(std::move(out), {a, b}, [](detail::Node& node) {
    auto& pa = parent(node, 0);
    auto& pb = parent(node, 1);
    if (pa.requires_grad) view(pa.grad_buffer()).noalias() += view(node.grad) * view(pb.value).transpose();
    if (pb.requires_grad) view(pb.grad_buffer()).noalias() += view(pa.value).transpose() * view(node.grad);
  });
}

Tensor transpose(Tape& tape, const Tensor& a) {
  Matrix out(a.cols(), a.rows());
  view(out) = view(a.value()).transpose();
  return tape.record(std::move(out), {a}, [](detail::Node& node) {
    view(parent(node, 0).grad_buffer()) += view(node.grad).transpose();
  });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch("add", a.value(), b.value());
  Matrix out(a.rows(), a.cols());
  view(out) = view(a.value()) + view(b.value());
  return tape.record(std::move(out), {a, b}, [](detail::Node& node) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (parent(node, i).requires_grad) view(parent(node, i).grad_buffer()) += view(node.grad);
    }
  });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch("sub", a.value(), b.value());
  Matrix out(a.rows(), a.cols());
  view(out) = view(a.value()) - view(b.value());
  return tape.record(std::move(out), {a, b}, [](detail::Node& node) {
    if (parent(node, 0).requires_grad) view(parent(node, 0).grad_buffer()) += view(node.grad);
    if (parent(node, 1).requires_grad) view(parent(node, 1).grad_buffer()) -= view(node.grad);
  });
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  Matrix out(a.rows(), a.cols());
  view(out) = view(a.value()) * factor;
  return tape.record(std::move(out), {a}, [factor](detail::Node& node) {
    view(parent(node, 0).grad_buffer()) += view(node.grad) * factor;
  });
}

Tensor add_row(Tape& tape, const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) shape_mismatch("add_row", a.value(), bias.value());
  Matrix out(a.rows(), a.cols());
  view(out) = view(a.value()).rowwise() + view(bias.value()).row(0);
  return tape.record(std::move(out), {a, bias}, [](detail::Node& node) {
    if (parent(node, 0).requires_grad) view(parent(node, 0).grad_buffer()) += view(node.grad);
    if (parent(node, 1).requires_grad) view(parent(node, 1).grad_buffer()).row(0) += view(node.grad).colwise().sum();
  });
}

Tensor mul_row(Tape& tape, const Tensor& a, const Tensor& gain) {
  if (gain.rows() != 1 || gain.cols() != a.cols()) shape_mismatch("mul_row", a.value(), gain.value());
  Matrix out(a.rows(), a.cols());
  view(out) = view(a.value()).array().rowwise() * view(gain.value()).row(0).array();
  return tape.record(std::move(out), {a, gain}, [](detail::Node& node) {
    auto& pa = parent(node, 0);
    auto& pg = parent(node, 1);
    if (pa.requires_grad) {
      view(pa.grad_buffer()).array() += view(node.grad).array().rowwise() * view(pg.value).row(0).array();
    }
    if (pg.requires_grad) {
      view(pg.grad_buffer()).row(0) += (view(node.grad).array() * view(pa.value).array()).colwise().sum().matrix();
    }
  });
}

Tensor concat_rows(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const auto cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) shape_mismatch("concat_rows", parts.front().value(), p.value());
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.value().size();
  }
  return tape.record(std::move(out), {parts.begin(), parts.end()}, [](detail::Node& node) {
    std::size_t offset = 0;
    for (auto& p : node.parents) {
      const auto n = p->value.size();
      if (p->requires_grad) {
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += node.grad[offset + i];
      }
      offset += n;
    }
  });
}

Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const auto rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) shape_mismatch("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    view(out).middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(p.cols())) = view(p.value());
    offset += p.cols();
  }
  return tape.record(std::move(out), {parts.begin(), parts.end()}, [](detail::Node& node) {
    std::size_t offset = 0;
    for (auto& p : node.parents) {
      const auto c = static_cast<Eigen::Index>(p->value.cols());
      if (p->requires_grad) view(p->grad_buffer()) += view(node.grad).middleCols(static_cast<Eigen::Index>(offset), c);
      offset += p->value.cols();
    }
  });
}

Tensor slice_rows(Tape& tape, const Tensor& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows() || count == 0) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) + ") outside " +
                     shape_string(a.value()));
  }
  Matrix out(count, a.cols());
  view(out) = view(a.value()).middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  return tape.record(std::move(out), {a}, [begin, count](detail::Node& node) {
    view(parent(node, 0).grad_buffer()).middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) +=
        view(node.grad);
  });
}

Tensor row_softmax(Tape& tape, const Tensor& a) {
  Matrix out(a.rows(), a.cols());
  const auto& x = a.value();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double peak = -INFINITY;
    for (std::size_t c = 0; c < x.cols(); ++c) peak = std::max(peak, x(r, c));
    double total = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) total += out(r, c) = std::exp(x(r, c) - peak);
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) /= total;
  }
  return tape.record(std::move(out), {a}, [](detail::Node& node) {
    auto& g = parent(node, 0).grad_buffer();
    const auto& y = node.value;
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += node.grad(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) g(r, c) += y(r, c) * (node.grad(r, c) - dot);
    }
  });
}

Tensor layer_norm(Tape& tape, const Tensor& a, double epsilon) {
  const auto& x = a.value();
  const auto n = static_cast<double>(x.cols());
  Matrix out(x.rows(), x.cols());
  std::vector<double> inv_std(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) mu += x(r, c);
    mu /= n;
    double var = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) var += (x(r, c) - mu) * (x(r, c) - mu);
    var /= n;
    inv_std[r] = 1.0 / std::sqrt(var + epsilon);
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = (x(r, c) - mu) * inv_std[r];
  }
  return tape.record(std::move(out), {a}, [inv_std = std::move(inv_std), n](detail::Node& node) {
    auto& g = parent(node, 0).grad_buffer();
    const auto& y = node.value;
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double mean_g = 0.0;
      double mean_gy = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) {
        mean_g += node.grad(r, c);
        mean_gy += node.grad(r, c) * y(r, c);
      }
      mean_g /= n;
      mean_gy /= n;
      for (std::size_t c = 0; c < y.cols(); ++c) {
        g(r, c) += inv_std[r] * (node.grad(r, c) - mean_g - y(r, c) * mean_gy);
      }
    }
  });
}

Tensor relu(Tape& tape, const Tensor& a) {
  Matrix out(a.rows(), a.cols());
  view(out) = view(a.value()).cwiseMax(0.0);
  return tape.record(std::move(out), {a}, [](detail::Node& node) {
    auto& p = parent(node, 0);
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (p.value[i] > 0.0) g[i] += node.grad[i];
    }
  });
}

Tensor dropout(Tape& tape, const Tensor& a, double p) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout probability must be in [0, 1)");
  if (!tape.training() || p == 0.0) return a;
  Matrix mask(a.rows(), a.cols());
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = tape.rng().uniform() < p ? 0.0 : keep_scale;
  Matrix out(a.rows(), a.cols());
  view(out) = view(a.value()).cwiseProduct(view(mask));
  return tape.record(std::move(out), {a}, [mask = std::move(mask)](detail::Node& node) {
    view(parent(node, 0).grad_buffer()) += view(node.grad).cwiseProduct(view(mask));
  });
}

Tensor row_mean(Tape& tape, const Tensor& a) {
  Matrix out(a.rows(), 1);
  view(out) = view(a.value()).rowwise().mean();
  const auto cols = static_cast<double>(a.cols());
  return tape.record(std::move(out), {a}, [cols](detail::Node& node) {
    auto g = view(parent(node, 0).grad_buffer());
    g.colwise() += view(node.grad).col(0) / cols;
  });
}

Tensor square(Tape& tape, const Tensor& a) {
  Matrix out(a.rows(), a.cols());
  view(out) = view(a.value()).cwiseAbs2();
  return tape.record(std::move(out), {a}, [](detail::Node& node) {
    auto& p = parent(node, 0);
    view(p.grad_buffer()) += 2.0 * view(node.grad).cwiseProduct(view(p.value));
  });
}

Tensor mean(Tape& tape, const Tensor& a) {
  if (a.value().empty()) throw ShapeError("mean of an empty tensor");
  Matrix out(1, 1);
  out[0] = view(a.value()).mean();
  const auto count = static_cast<double>(a.value().size());
  return tape.record(std::move(out), {a}, [count](detail::Node& node) {
    view(parent(node, 0).grad_buffer()).array() += node.grad[0] / count;
  });
}

// ---------------------------------------------------------------------------
// Optimizer

Adam::Adam(std::vector<Tensor> parameters, AdamOptions options)
    : parameters_(std::move(parameters)), options_(options) {
  for (const auto& p : parameters_) {
    first_moment_.emplace_back(p.rows(), p.cols());
    second_moment_.emplace_back(p.rows(), p.cols());
  }
}

void Adam::zero_grad() {
  for (auto& p : parameters_) p.zero_grad();
}

void Adam::step(double lr) {
  for (const auto& p : parameters_) {
    for (const double g : p.grad().data()) {
      if (!std::isfinite(g)) throw std::runtime_error("non-finite gradient in parameter '" + p.name() + "'");
    }
  }
  ++steps_;
  const double correction1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < parameters_.size(); ++k) {
    auto& value = parameters_[k].mutable_value();
    const auto& grad = parameters_[k].grad();
    auto& m = first_moment_[k];
    auto& v = second_moment_[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      value[i] -= lr * options_.weight_decay * value[i];
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      value[i] -= lr * m_hat / (std::sqrt(v_hat) + options_.epsilon);
    }
  }
}

double StepLR::multiplier(std::size_t epoch) const {
  if (step_size == 0) throw std::invalid_argument("StepLR step_size must be at least 1");
  return std::pow(gamma, static_cast<double>(epoch / step_size));
}

}  // namespace price
