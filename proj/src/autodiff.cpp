#include "rmen/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rmen/errors.hpp"

namespace rmen {

const Tensor& Var::value() const {
  if (!tape) throw ContractError("variable is not attached to a tape");
  return tape->value(id);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw NonFiniteError("leaf value is not finite");
  Node node;
  node.owned = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::borrow(const Tensor& value, bool requires_grad) {
  if (!value.all_finite()) throw NonFiniteError("leaf value is not finite");
  Node node;
  node.borrowed = &value;
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tensor& Tape::value(std::uint32_t id) const {
  const Node& n = nodes_.at(id);
  return n.borrowed ? *n.borrowed : n.owned;
}

Var Tape::record(Tensor value, std::vector<std::uint32_t> parents, BackwardFn backward, const char* op) {
  if (!value.all_finite()) throw NonFiniteError(std::string(op) + " produced a non-finite value");
  Node node;
  node.owned = std::move(value);
  for (auto p : parents) {
    if (nodes_[p].requires_grad) node.requires_grad = true;
  }
  node.parents = std::move(parents);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor* Tape::grad_target(std::uint32_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(value(id).shape(), 0.0);
  return &n.grad;
}

const Tensor& Tape::grad(Var v) const {
  if (!backward_done_) throw ContractError("grad() requested before backward()");
  const Node& n = nodes_.at(v.id);
  if (!n.requires_grad) throw ContractError("grad() requested for a node without requires_grad");
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape != this) throw ContractError("backward root belongs to another tape");
  if (backward_done_) throw ContractError("backward() called twice without zero_grad()");
  if (value(root.id).size() != 1) {
    throw ContractError("backward() root must be a scalar, got shape " + shape_string(value(root.id).shape()));
  }
  backward_done_ = true;
  if (Tensor* g = grad_target(root.id)) (*g)[0] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, n.grad);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (!n.requires_grad) continue;
    if (n.grad.empty()) n.grad = Tensor(value(i).shape(), 0.0);
    if (n.parents.empty() && !n.grad.all_finite()) throw NonFiniteError("gradient of a leaf is not finite");
  }
}

void Tape::zero_grad() {
  for (auto& n : nodes_) n.grad = Tensor();
  backward_done_ = false;
}

namespace {

void require_same_tape(Var a, Var b) {
  if (!a.tape || a.tape != b.tape) throw ContractError("operands live on different tapes");
}

const Tensor& matrix_value(Var v, const char* op) {
  const Tensor& t = v.value();
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got shape " + shape_string(t.shape()));
  }
  return t;
}

enum class Broadcast { kSame, kLeftScalar, kRightScalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.size() == 1) return Broadcast::kRightScalar;
  if (a.size() == 1) return Broadcast::kLeftScalar;
  throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                       " are neither identical nor scalar");
}

template <typename Fwd, typename DA, typename DB>
Var binary(Var a, Var b, const char* op, Fwd fwd, DA da, DB db) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast kind = broadcast_kind(av, bv, op);
  const Shape& out_shape = kind == Broadcast::kLeftScalar ? bv.shape() : av.shape();
  Tensor out(out_shape);
  const std::size_t n = out.size();
  auto ai = [kind](std::size_t i) { return kind == Broadcast::kLeftScalar ? 0 : i; };
  auto bi = [kind](std::size_t i) { return kind == Broadcast::kRightScalar ? 0 : i; };
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[ai(i)], bv[bi(i)]);
  const auto ia = a.id, ib = b.id;
  return a.tape->record(
      std::move(out), {ia, ib},
      [ia, ib, da, db, n, ai, bi](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(ia);
        const Tensor& bv = t.value(ib);
        if (Tensor* ga = t.grad_target(ia)) {
          for (std::size_t i = 0; i < n; ++i) (*ga)[ai(i)] += g[i] * da(av[ai(i)], bv[bi(i)]);
        }
        if (Tensor* gb = t.grad_target(ib)) {
          for (std::size_t i = 0; i < n; ++i) (*gb)[bi(i)] += g[i] * db(av[ai(i)], bv[bi(i)]);
        }
      },
      op);
}

// Elementwise unary op whose derivative is expressed through input x and output y.
template <typename Fwd, typename Deriv>
Var unary(Var a, const char* op, Fwd fwd, Deriv deriv) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  const auto ia = a.id;
  Tape* tape = a.tape;
  const std::uint32_t self = static_cast<std::uint32_t>(tape->size());
  return tape->record(
      std::move(out), {ia},
      [ia, self, deriv](Tape& t, const Tensor& g) {
        Tensor* ga = t.grad_target(ia);
        if (!ga) return;
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(self);
        for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += g[i] * deriv(x[i], y[i]);
      },
      op);
}

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = matrix_value(a, "matmul");
  const Tensor& bv = matrix_value(b, "matmul");
  const std::size_t p = av.rows(), q = av.cols(), r = bv.cols();
  if (bv.rows() != q) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()));
  }
  Tensor out({p, r});
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t k = 0; k < q; ++k) {
      const double aik = av(i, k);
      for (std::size_t j = 0; j < r; ++j) out(i, j) += aik * bv(k, j);
    }
  }
  const auto ia = a.id, ib = b.id;
  return a.tape->record(
      std::move(out), {ia, ib},
      [ia, ib, p, q, r](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(ia);
        const Tensor& bv = t.value(ib);
        // dA = G B^T
        if (Tensor* ga = t.grad_target(ia)) {
          for (std::size_t i = 0; i < p; ++i)
            for (std::size_t k = 0; k < q; ++k) {
              double acc = 0.0;
              for (std::size_t j = 0; j < r; ++j) acc += g(i, j) * bv(k, j);
              (*ga)(i, k) += acc;
            }
        }
        // dB = A^T G
        if (Tensor* gb = t.grad_target(ib)) {
          for (std::size_t i = 0; i < p; ++i)
            for (std::size_t k = 0; k < q; ++k) {
              const double aik = av(i, k);
              for (std::size_t j = 0; j < r; ++j) (*gb)(k, j) += aik * g(i, j);
            }
        }
      },
      "matmul");
}

Var transpose(Var a) {
  const Tensor& av = matrix_value(a, "transpose");
  const std::size_t p = av.rows(), q = av.cols();
  Tensor out({q, p});
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < q; ++j) out(j, i) = av(i, j);
  const auto ia = a.id;
  return a.tape->record(
      std::move(out), {ia},
      [ia, p, q](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_target(ia)) {
          for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < q; ++j) (*ga)(i, j) += g(j, i);
        }
      },
      "transpose");
}

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var scale(Var a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Var relu(Var a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var abs(Var a) {
  return unary(
      a, "abs", [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var softplus(Var a) {
  return unary(
      a, "softplus", [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
      [](double x, double) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

Var sum(Var a) {
  const Tensor& av = a.value();
  double acc = 0.0;
  for (double v : av.data()) acc += v;
  const auto ia = a.id;
  return a.tape->record(
      Tensor::scalar(acc), {ia},
      [ia](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_target(ia)) {
          for (auto& v : ga->data()) v += g[0];
        }
      },
      "sum");
}

Var dot(Var a, Var b) { return sum(mul(a, b)); }

Var l2_norm(Var a) {
  const Tensor& av = a.value();
  double sq = 0.0;
  for (double v : av.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  const auto ia = a.id;
  return a.tape->record(
      Tensor::scalar(norm), {ia},
      [ia, norm](Tape& t, const Tensor& g) {
        Tensor* ga = t.grad_target(ia);
        if (!ga || norm == 0.0) return;
        const Tensor& av = t.value(ia);
        for (std::size_t i = 0; i < av.size(); ++i) (*ga)[i] += g[0] * av[i] / norm;
      },
      "l2_norm");
}

Var softmax_rows(Var a) {
  const Tensor& av = matrix_value(a, "softmax_rows");
  const std::size_t p = av.rows(), q = av.cols();
  Tensor out({p, q});
  for (std::size_t i = 0; i < p; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < q; ++j) mx = std::max(mx, av(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < q; ++j) {
      out(i, j) = std::exp(av(i, j) - mx);
      z += out(i, j);
    }
    for (std::size_t j = 0; j < q; ++j) out(i, j) /= z;
  }
  const auto ia = a.id;
  const std::uint32_t self = static_cast<std::uint32_t>(a.tape->size());
  return a.tape->record(
      std::move(out), {ia},
      [ia, self, p, q](Tape& t, const Tensor& g) {
        Tensor* ga = t.grad_target(ia);
        if (!ga) return;
        const Tensor& y = t.value(self);
        for (std::size_t i = 0; i < p; ++i) {
          double inner = 0.0;
          for (std::size_t j = 0; j < q; ++j) inner += g(i, j) * y(i, j);
          for (std::size_t j = 0; j < q; ++j) (*ga)(i, j) += y(i, j) * (g(i, j) - inner);
        }
      },
      "softmax_rows");
}

Var conv_columns(Var input, Var filters) {
  require_same_tape(input, filters);
  const Tensor& y = matrix_value(input, "conv_columns");
  const Tensor& w = filters.value();
  if (w.rank() != 3) throw DimensionError("conv_columns: filters must be [F x m x c], got " + shape_string(w.shape()));
  const std::size_t k = y.rows(), c = y.cols();
  const std::size_t nf = w.dim(0), m = w.dim(1);
  if (w.dim(2) != c) {
    throw DimensionError("conv_columns: filter width " + std::to_string(w.dim(2)) + " does not span " +
                         std::to_string(c) + " columns");
  }
  if (m > k) {
    throw DimensionError("conv_columns: window " + std::to_string(m) + " exceeds input height " + std::to_string(k));
  }
  const std::size_t len = k - m + 1;
  Tensor out({nf, len});
  for (std::size_t f = 0; f < nf; ++f) {
    const double* wf = w.data().data() + f * m * c;
    for (std::size_t i = 0; i < len; ++i) {
      double acc = 0.0;
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t col = 0; col < c; ++col) acc += y(i + r, col) * wf[r * c + col];
      out(f, i) = acc;
    }
  }
  const auto iy = input.id, iw = filters.id;
  return input.tape->record(
      std::move(out), {iy, iw},
      [iy, iw, nf, m, c, len](Tape& t, const Tensor& g) {
        const Tensor& y = t.value(iy);
        const Tensor& w = t.value(iw);
        Tensor* gy = t.grad_target(iy);
        Tensor* gw = t.grad_target(iw);
        for (std::size_t f = 0; f < nf; ++f) {
          const double* wf = w.data().data() + f * m * c;
          for (std::size_t i = 0; i < len; ++i) {
            const double gi = g(f, i);
            if (gi == 0.0) continue;
            for (std::size_t r = 0; r < m; ++r)
              for (std::size_t col = 0; col < c; ++col) {
                if (gy) (*gy)(i + r, col) += gi * wf[r * c + col];
                if (gw) (*gw)[f * m * c + r * c + col] += gi * y(i + r, col);
              }
          }
        }
      },
      "conv_columns");
}

MaxPoolResult max_pool(Var v) {
  const Tensor& av = v.value();
  std::size_t best = 0;
  for (std::size_t i = 1; i < av.size(); ++i) {
    if (av[i] > av[best]) best = i;
  }
  const auto ia = v.id;
  Var out = v.tape->record(
      Tensor::scalar(av[best]), {ia},
      [ia, best](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_target(ia)) (*ga)[best] += g[0];
      },
      "max_pool");
  return {out, best};
}

Var max_pool_rows(Var a) {
  const Tensor& av = matrix_value(a, "max_pool_rows");
  const std::size_t p = av.rows(), q = av.cols();
  Tensor out({p, 1});
  std::vector<std::size_t> arg(p, 0);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 1; j < q; ++j) {
      if (av(i, j) > av(i, arg[i])) arg[i] = j;
    }
    out(i, 0) = av(i, arg[i]);
  }
  const auto ia = a.id;
  return a.tape->record(
      std::move(out), {ia},
      [ia, arg = std::move(arg)](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_target(ia)) {
          for (std::size_t i = 0; i < arg.size(); ++i) (*ga)(i, arg[i]) += g[i];
        }
      },
      "max_pool_rows");
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  require_same_tape(a, gain);
  require_same_tape(a, bias);
  const Tensor& av = a.value();
  if (av.rank() > 2) throw DimensionError("layer_norm expects a vector or matrix");
  const std::size_t k = av.rank() == 1 ? av.dim(0) : av.cols();
  const std::size_t p = av.size() / k;
  if (k < 2) throw DimensionError("layer_norm needs at least 2 features");
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  if (gv.size() != k || bv.size() != k) throw DimensionError("layer_norm gain/bias must have " + std::to_string(k) + " elements");

  Tensor out(av.shape());
  std::vector<double> normed(av.size());
  std::vector<double> inv_std(p);
  for (std::size_t i = 0; i < p; ++i) {
    const double* x = av.data().data() + i * k;
    double mean = 0.0;
    for (std::size_t j = 0; j < k; ++j) mean += x[j];
    mean /= static_cast<double>(k);
    double var = 0.0;
    for (std::size_t j = 0; j < k; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<double>(k);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < k; ++j) {
      normed[i * k + j] = (x[j] - mean) * inv_std[i];
      out[i * k + j] = gv[j] * normed[i * k + j] + bv[j];
    }
  }
  const auto ia = a.id, ig = gain.id, ib = bias.id;
  return a.tape->record(
      std::move(out), {ia, ig, ib},
      [ia, ig, ib, p, k, normed = std::move(normed), inv_std = std::move(inv_std)](Tape& t, const Tensor& g) {
        const Tensor& gv = t.value(ig);
        Tensor* ga = t.grad_target(ia);
        Tensor* gg = t.grad_target(ig);
        Tensor* gb = t.grad_target(ib);
        const double kd = static_cast<double>(k);
        for (std::size_t i = 0; i < p; ++i) {
          double mean_dn = 0.0, mean_dn_n = 0.0;
          for (std::size_t j = 0; j < k; ++j) {
            const double gij = g[i * k + j];
            const double n = normed[i * k + j];
            if (gg) (*gg)[j] += gij * n;
            if (gb) (*gb)[j] += gij;
            const double dn = gij * gv[j];
            mean_dn += dn;
            mean_dn_n += dn * n;
          }
          if (!ga) continue;
          mean_dn /= kd;
          mean_dn_n /= kd;
          for (std::size_t j = 0; j < k; ++j) {
            const double dn = g[i * k + j] * gv[j];
            (*ga)[i * k + j] += inv_std[i] * (dn - mean_dn - normed[i * k + j] * mean_dn_n);
          }
        }
      },
      "layer_norm");
}

Var gather_row(Var table, std::size_t row) {
  const Tensor& tv = matrix_value(table, "gather_row");
  if (row >= tv.rows()) {
    throw DimensionError("gather_row: index " + std::to_string(row) + " out of range for " +
                         std::to_string(tv.rows()) + " rows");
  }
  const std::size_t d = tv.cols();
  Tensor out({1, d});
  std::copy_n(tv.data().begin() + static_cast<std::ptrdiff_t>(row * d), d, out.data().begin());
  const auto it = table.id;
  return table.tape->record(
      std::move(out), {it},
      [it, row, d](Tape& t, const Tensor& g) {
        if (Tensor* gt = t.grad_target(it)) {
          for (std::size_t j = 0; j < d; ++j) (*gt)[row * d + j] += g[j];
        }
      },
      "gather_row");
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows needs at least one part");
  const std::size_t cols = matrix_value(parts[0], "concat_rows").cols();
  std::size_t rows = 0;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> offsets;
  for (const Var& v : parts) {
    require_same_tape(parts[0], v);
    const Tensor& t = matrix_value(v, "concat_rows");
    if (t.cols() != cols) throw DimensionError("concat_rows: column counts differ");
    offsets.push_back(rows * cols);
    rows += t.rows();
    ids.push_back(v.id);
  }
  Tensor out({rows, cols});
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& t = parts[p].value();
    std::copy(t.data().begin(), t.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offsets[p]));
  }
  return parts[0].tape->record(
      std::move(out), ids,
      [ids, offsets](Tape& t, const Tensor& g) {
        for (std::size_t p = 0; p < ids.size(); ++p) {
          Tensor* gp = t.grad_target(ids[p]);
          if (!gp) continue;
          for (std::size_t i = 0; i < gp->size(); ++i) (*gp)[i] += g[offsets[p] + i];
        }
      },
      "concat_rows");
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols needs at least one part");
  const std::size_t rows = matrix_value(parts[0], "concat_cols").rows();
  std::size_t cols = 0;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> col_offsets, widths;
  for (const Var& v : parts) {
    require_same_tape(parts[0], v);
    const Tensor& t = matrix_value(v, "concat_cols");
    if (t.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    col_offsets.push_back(cols);
    widths.push_back(t.cols());
    cols += t.cols();
    ids.push_back(v.id);
  }
  Tensor out({rows, cols});
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& t = parts[p].value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < widths[p]; ++j) out(i, col_offsets[p] + j) = t(i, j);
  }
  return parts[0].tape->record(
      std::move(out), ids,
      [ids, col_offsets, widths, rows](Tape& t, const Tensor& g) {
        for (std::size_t p = 0; p < ids.size(); ++p) {
          Tensor* gp = t.grad_target(ids[p]);
          if (!gp) continue;
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < widths[p]; ++j) (*gp)(i, j) += g(i, col_offsets[p] + j);
        }
      },
      "concat_cols");
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = matrix_value(a, "slice_cols");
  if (count == 0 || begin + count > av.cols()) throw DimensionError("slice_cols: range out of bounds");
  const std::size_t rows = av.rows();
  Tensor out({rows, count});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = av(i, begin + j);
  const auto ia = a.id;
  return a.tape->record(
      std::move(out), {ia},
      [ia, begin, count, rows](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_target(ia)) {
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < count; ++j) (*ga)(i, begin + j) += g(i, j);
        }
      },
      "slice_cols");
}

Var tile_rows(Var a, std::size_t times) {
  const Tensor& av = matrix_value(a, "tile_rows");
  if (av.rows() != 1) throw DimensionError("tile_rows expects a single row");
  if (times == 0) throw DimensionError("tile_rows needs times >= 1");
  const std::size_t k = av.cols();
  Tensor out({times, k});
  for (std::size_t i = 0; i < times; ++i)
    for (std::size_t j = 0; j < k; ++j) out(i, j) = av[j];
  const auto ia = a.id;
  return a.tape->record(
      std::move(out), {ia},
      [ia, times, k](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_target(ia)) {
          for (std::size_t i = 0; i < times; ++i)
            for (std::size_t j = 0; j < k; ++j) (*ga)[j] += g(i, j);
        }
      },
      "tile_rows");
}

Var mean_rows(Var a) {
  const Tensor& av = matrix_value(a, "mean_rows");
  const std::size_t p = av.rows(), k = av.cols();
  Tensor out({1, k});
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < k; ++j) out[j] += av(i, j);
  const double inv = 1.0 / static_cast<double>(p);
  for (auto& v : out.data()) v *= inv;
  const auto ia = a.id;
  return a.tape->record(
      std::move(out), {ia},
      [ia, p, k, inv](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_target(ia)) {
          for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < k; ++j) (*ga)(i, j) += g[j] * inv;
        }
      },
      "mean_rows");
}

Var reshape(Var a, Shape shape) {
  const Tensor& av = a.value();
  if (shape_size(shape) != av.size()) {
    throw DimensionError("reshape: " + shape_string(av.shape()) + " to " + shape_string(shape));
  }
  Tensor out(std::move(shape), av.storage());
  const auto ia = a.id;
  return a.tape->record(
      std::move(out), {ia},
      [ia](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_target(ia)) add_into(*ga, g);
      },
      "reshape");
}

}  // namespace rmen
