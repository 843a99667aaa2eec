#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "price/random.hpp"

namespace price {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix row(std::span<const double> values);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_string(const Matrix& m);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tape;

namespace detail {
struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::string name;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Matrix& grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Matrix(value.rows(), value.cols());
    return grad;
  }
};
}  // namespace detail

/// Handle to a value in the computation graph. Copies share the node.
class Tensor {
 public:
  Tensor() = default;

  /// Trainable leaf; gradients accumulate across backward passes until cleared.
  static Tensor parameter(Matrix value, std::string name);
  static Tensor constant(Matrix value);

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  const std::string& name() const { return node_->name; }
  void zero_grad();
  /// Scalar value of a 1x1 tensor.
  double item() const;

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Records primitive applications in execution order; backward replays them
/// in reverse. One tape per forward pass, confined to one thread.
class Tape {
 public:
  explicit Tape(bool training = false, std::uint64_t seed = 0) : training_(training), rng_(seed) {}

  bool training() const { return training_; }
  Rng& rng() { return rng_; }
  std::size_t size() const { return nodes_.size(); }

  /// Appends a node computed from `parents`. `backward` receives the node
  /// (with its grad filled) and must accumulate into parents that require grad.
  Tensor record(Matrix value, std::vector<Tensor> parents, std::function<void(detail::Node&)> backward);

  /// Reverse-mode pass from a 1x1 loss.
  void backward(const Tensor& loss);

 private:
  bool training_;
  Rng rng_;
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

// Primitives. Shape mismatches raise ShapeError naming both shapes.
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
/// a (n x m) + bias (1 x m) broadcast over rows.
Tensor add_row(Tape& tape, const Tensor& a, const Tensor& bias);
/// a (n x m) * gain (1 x m) elementwise, broadcast over rows.
Tensor mul_row(Tape& tape, const Tensor& a, const Tensor& gain);
Tensor concat_rows(Tape& tape, std::span<const Tensor> parts);
Tensor concat_cols(Tape& tape, std::span<const Tensor> parts);
Tensor slice_rows(Tape& tape, const Tensor& a, std::size_t begin, std::size_t count);
Tensor row_softmax(Tape& tape, const Tensor& a);
/// Per-row standardization to mean 0, variance 1 (no affine part).
Tensor layer_norm(Tape& tape, const Tensor& a, double epsilon = 1e-12);
Tensor relu(Tape& tape, const Tensor& a);
/// Inverted dropout; identity unless the tape is in training mode.
Tensor dropout(Tape& tape, const Tensor& a, double p);
Tensor row_mean(Tape& tape, const Tensor& a);
Tensor square(Tape& tape, const Tensor& a);
Tensor mean(Tape& tape, const Tensor& a);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with bias correction and decoupled weight decay (p -= lr * wd * p
/// before the moment update is applied).
class Adam {
 public:
  Adam(std::vector<Tensor> parameters, AdamOptions options);

  void zero_grad();
  /// Applies one update from the accumulated gradients. Throws on non-finite gradients.
  void step(double lr);
  std::size_t steps() const { return steps_; }

 private:
  std::vector<Tensor> parameters_;
  AdamOptions options_;
  std::vector<Matrix> first_moment_;
  std::vector<Matrix> second_moment_;
  std::size_t steps_ = 0;
};

struct StepLR {
  std::size_t step_size = 10;
  double gamma = 1.0;

  /// gamma ^ floor(epoch / step_size)
  double multiplier(std::size_t epoch) const;
};

}  // namespace price
