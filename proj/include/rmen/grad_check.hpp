#pragma once

#include <functional>
#include <span>
#include <vector>

#include "rmen/autodiff.hpp"

namespace rmen {

// Builds a scalar graph on `tape` from one leaf per parameter tensor.
using GraphBuilder = std::function<Var(Tape& tape, std::span<const Var> leaves)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_leaf = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares reverse-mode gradients against central differences
// (f(x+h) - f(x-h)) / 2h on every coordinate of every leaf. The error per
// coordinate is |a - b| / max(1, |a|, |b|).
//
// Throws ContractError if two forward passes at the same point differ.
GradCheckResult grad_check(const GraphBuilder& f, std::vector<Tensor> theta, double h = 1e-5);

}  // namespace rmen
