#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "price/tensor.hpp"

namespace price::testing {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst;  // "param[index]" of the worst entry
  std::size_t entries = 0;
};

/// Compares reverse-mode gradients of a scalar loss against central
/// differences for every entry of every parameter. `loss` must rebuild the
/// same graph on each call. Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckResult check_gradients(const std::function<Tensor(Tape&)>& loss, const std::vector<Tensor>& parameters,
                                double h = 1e-5, double floor = 1e-6);

/// A random composition of tape primitives over freshly drawn parameters.
/// The same seed always yields the same graph and values.
struct RandomGraph {
  std::vector<Tensor> parameters;
  std::function<Tensor(Tape&)> loss;
  std::string description;
};

RandomGraph make_random_graph(std::uint64_t seed);

}  // namespace price::testing
