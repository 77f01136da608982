#include "rmen/grad_check.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "rmen/errors.hpp"

namespace rmen {

namespace {

double evaluate(const GraphBuilder& f, const std::vector<Tensor>& theta) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(theta.size());
  for (const auto& t : theta) leaves.push_back(tape.borrow(t, false));
  return f(tape, leaves).value().item();
}

}  // namespace

GradCheckResult grad_check(const GraphBuilder& f, std::vector<Tensor> theta, double h) {
  const double first = evaluate(f, theta);
  const double second = evaluate(f, theta);
  if (std::bit_cast<std::uint64_t>(first) != std::bit_cast<std::uint64_t>(second)) {
    throw ContractError("grad_check: graph builder is not deterministic");
  }

  Tape tape;
  std::vector<Var> leaves;
  for (const auto& t : theta) leaves.push_back(tape.borrow(t, true));
  Var root = f(tape, leaves);
  tape.backward(root);
  std::vector<Tensor> analytic;
  for (const Var& v : leaves) analytic.push_back(tape.grad(v));

  GradCheckResult result;
  for (std::size_t leaf = 0; leaf < theta.size(); ++leaf) {
    for (std::size_t i = 0; i < theta[leaf].size(); ++i) {
      const double saved = theta[leaf][i];
      theta[leaf][i] = saved + h;
      const double up = evaluate(f, theta);
      theta[leaf][i] = saved - h;
      const double down = evaluate(f, theta);
      theta[leaf][i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[leaf][i];
      const double err = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
      if (err > result.max_rel_error || (leaf == 0 && i == 0)) {
        result = {err, leaf, i, a, numeric};
      }
    }
  }
  return result;
}

}  // namespace rmen
