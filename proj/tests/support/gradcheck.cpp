#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace price::testing {

GradCheckResult check_gradients(const std::function<Tensor(Tape&)>& loss, const std::vector<Tensor>& parameters,
                                double h, double floor) {
  for (auto p : parameters) p.zero_grad();
  {
    Tape tape(true, 1);
    tape.backward(loss(tape));
  }
  auto evaluate = [&] {
    Tape tape(true, 1);
    return loss(tape).item();
  };
  GradCheckResult result;
  for (auto p : parameters) {
    const Matrix analytic = p.grad().empty() ? Matrix(p.rows(), p.cols()) : p.grad();
    for (std::size_t i = 0; i < p.value().size(); ++i) {
      const double original = p.value()[i];
      p.mutable_value()[i] = original + h;
      const double up = evaluate();
      p.mutable_value()[i] = original - h;
      const double down = evaluate();
      p.mutable_value()[i] = original;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++result.entries;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst = p.name() + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

namespace {

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

}  // namespace

RandomGraph make_random_graph(std::uint64_t seed) {
  Rng rng(seed);
  const auto n = 1 + static_cast<std::size_t>(rng.index(4));
  const auto m = 1 + static_cast<std::size_t>(rng.index(4));
  const auto k = 2 + static_cast<std::size_t>(rng.index(3));

  RandomGraph g;
  auto param = [&](std::size_t r, std::size_t c, const std::string& name, double lo = -1.0, double hi = 1.0) {
    g.parameters.push_back(Tensor::parameter(random_matrix(rng, r, c, lo, hi), name));
    return g.parameters.back();
  };
  const auto x = param(n, m, "x");
  const auto w = param(m, k, "w");
  const auto bias = param(1, k, "bias");
  const auto other = param(n, k, "other");
  const auto square_w = param(k, k, "square_w");
  const auto wide_w = param(2 * k, k, "wide_w");
  const auto gain = param(1, k, "gain", 0.5, 1.5);

  const auto steps = 3 + static_cast<std::size_t>(rng.index(6));
  std::vector<int> ops(steps);
  for (auto& op : ops) op = static_cast<int>(rng.index(12));
  const auto final_op = static_cast<int>(rng.index(2));

  static const char* kNames[] = {"relu",  "softmax", "layer_norm", "scale",  "add",    "mul_row",
                                 "sub",   "matmul",  "transpose",  "concat", "slices", "dropout"};
  for (const auto op : ops) {
    g.description += kNames[op];
    g.description += ' ';
  }

  g.loss = [=](Tape& tape) {
    auto h = add_row(tape, matmul(tape, x, w), bias);
    for (const auto op : ops) {
      switch (op) {
        case 0: h = relu(tape, add(tape, h, scale(tape, other, 0.3))); break;
        case 1: h = row_softmax(tape, scale(tape, h, 2.0)); break;
        case 2: h = layer_norm(tape, add(tape, h, other), 1e-5); break;
        case 3: h = scale(tape, h, -1.7); break;
        case 4: h = add(tape, h, h); break;  // same tensor on both paths
        case 5: h = mul_row(tape, h, gain); break;
        case 6: h = sub(tape, other, square(tape, h)); break;
        case 7: h = matmul(tape, h, square_w); break;
        case 8: h = transpose(tape, matmul(tape, square_w, transpose(tape, h))); break;
        case 9: {
          const Tensor parts[] = {h, other};
          h = matmul(tape, concat_cols(tape, parts), wide_w);
          break;
        }
        case 10: {
          if (h.rows() < 2) {
            h = add_row(tape, h, bias);
            break;
          }
          const auto top = slice_rows(tape, h, 0, 1);
          const auto rest = slice_rows(tape, h, 1, h.rows() - 1);
          const Tensor parts[] = {rest, scale(tape, top, 0.5)};
          h = concat_rows(tape, parts);
          break;
        }
        case 11: h = dropout(tape, h, 0.25); break;
      }
    }
    return final_op == 0 ? mean(tape, square(tape, h)) : mean(tape, row_mean(tape, square(tape, h)));
  };
  return g;
}

}  // namespace price::testing
