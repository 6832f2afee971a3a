#include "sempos/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>

#include "sempos/errors.hpp"
#include "sempos/rng.hpp"

namespace sempos::ad {

namespace {

thread_local bool g_grad_enabled = true;

using BackwardFn = std::function<void(Node&)>;

Var make_result(Tensor value, std::vector<Var> parents, const char* op,
                BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  if (g_grad_enabled) {
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const Var& p) { return p && p->requires_grad; });
    if (any) {
      node->requires_grad = true;
      node->parents = std::move(parents);
      node->backward_fn = std::move(fn);
    }
  }
  return node;
}

bool wants_grad(const Var& v) { return v && v->requires_grad; }

std::string describe(const char* op, const Var& a, const Var& b) {
  return std::string(op) + ": " + shape_string(a->shape()) + " vs " +
         shape_string(b->shape());
}

void require_rank2(const char* op, const Var& x) {
  if (x->value.rank() != 2) {
    throw DimensionMismatch(std::string(op) + " expects a matrix, got " +
                            shape_string(x->shape()));
  }
}

// Four independent accumulators in a fixed order: deterministic and lets the
// compiler keep the partial sums in registers.
inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "constant";
  return node;
}

Var parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->op = "parameter";
  return node;
}

Tensor& ensure_grad(Node& node) {
  if (node.grad.size() != node.value.size() || node.grad.empty()) {
    node.grad = Tensor(node.value.shape());
  }
  return node.grad;
}

void backward(const Var& root) {
  if (root->value.size() != 1) {
    throw NonScalarRoot("backward needs a scalar root, got shape " +
                        shape_string(root->shape()));
  }
  if (!root->requires_grad) return;

  // Iterative post-order DFS: children after parents in `order`.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent && parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Leaves collect this pass into a fresh buffer and add it to their running
  // total at the end, so repeated passes accumulate whole gradients.
  std::vector<std::pair<Node*, Tensor>> carried;
  for (Node* n : order) {
    if (!n->is_leaf()) {
      n->grad = Tensor(n->value.shape());
    } else if (!n->grad.empty()) {
      carried.emplace_back(n, std::move(n->grad));
      n->grad = Tensor(n->value.shape());
    }
  }
  ensure_grad(*root)[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
  }
  for (auto& [n, previous] : carried) {
    for (std::size_t i = 0; i < previous.size(); ++i) n->grad[i] += previous[i];
  }
}

void zero_grad(std::span<const Var> params) {
  for (const auto& p : params) {
    if (!p->grad.empty()) p->grad.fill(0.0);
  }
}

Var matmul(const Var& a, const Var& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t m = a->shape()[0], k = a->shape()[1], n = b->shape()[1];
  if (b->shape()[0] != k) throw DimensionMismatch(describe("matmul", a, b));
  Tensor out({m, n});
  const double* A = a->value.data();
  const double* B = b->value.data();
  double* C = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) axpy(A[i * k + p], B + p * n, C + i * n, n);
  }
  return make_result(std::move(out), {a, b}, "matmul", [m, k, n](Node& self) {
    const Var& a = self.parents[0];
    const Var& b = self.parents[1];
    const double* G = self.grad.data();
    if (wants_grad(a)) {
      double* dA = ensure_grad(*a).data();
      const double* B = b->value.data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) dA[i * k + p] += dot(G + i * n, B + p * n, n);
      }
    }
    if (wants_grad(b)) {
      double* dB = ensure_grad(*b).data();
      const double* A = a->value.data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) axpy(A[i * k + p], G + i * n, dB + p * n, n);
      }
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require_rank2("linear", x);
  require_rank2("linear", weight);
  const std::size_t rows = x->shape()[0], in = x->shape()[1];
  const std::size_t out_dim = weight->shape()[0];
  if (weight->shape()[1] != in) throw DimensionMismatch(describe("linear", x, weight));
  if (bias && bias->value.size() != out_dim) {
    throw DimensionMismatch(describe("linear bias", weight, bias));
  }
  Tensor out({rows, out_dim});
  const double* X = x->value.data();
  const double* W = weight->value.data();
  const double* b = bias ? bias->value.data() : nullptr;
  double* Y = out.data();
  for (std::size_t t = 0; t < rows; ++t) {
    for (std::size_t o = 0; o < out_dim; ++o) {
      Y[t * out_dim + o] = dot(X + t * in, W + o * in, in) + (b ? b[o] : 0.0);
    }
  }
  return make_result(
      std::move(out), {x, weight, bias}, "linear", [rows, in, out_dim](Node& self) {
        const Var& x = self.parents[0];
        const Var& w = self.parents[1];
        const Var& b = self.parents[2];
        const double* G = self.grad.data();
        if (wants_grad(x)) {
          double* dX = ensure_grad(*x).data();
          const double* W = w->value.data();
          for (std::size_t t = 0; t < rows; ++t) {
            for (std::size_t o = 0; o < out_dim; ++o) {
              axpy(G[t * out_dim + o], W + o * in, dX + t * in, in);
            }
          }
        }
        if (wants_grad(w)) {
          double* dW = ensure_grad(*w).data();
          const double* X = x->value.data();
          for (std::size_t t = 0; t < rows; ++t) {
            for (std::size_t o = 0; o < out_dim; ++o) {
              axpy(G[t * out_dim + o], X + t * in, dW + o * in, in);
            }
          }
        }
        if (wants_grad(b)) {
          double* db = ensure_grad(*b).data();
          for (std::size_t t = 0; t < rows; ++t) {
            for (std::size_t o = 0; o < out_dim; ++o) db[o] += G[t * out_dim + o];
          }
        }
      });
}

namespace {

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a->shape() != b->shape()) throw DimensionMismatch(describe(op, a, b));
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  return make_result(std::move(out), {a, b}, "add", [](Node& self) {
    for (const Var& p : self.parents) {
      if (!wants_grad(p)) continue;
      auto& g = ensure_grad(*p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
  return make_result(std::move(out), {a, b}, "sub", [](Node& self) {
    if (wants_grad(self.parents[0])) {
      auto& g = ensure_grad(*self.parents[0]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(self.parents[1])) {
      auto& g = ensure_grad(*self.parents[1]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return make_result(std::move(out), {a, b}, "mul", [](Node& self) {
    const Var& a = self.parents[0];
    const Var& b = self.parents[1];
    if (wants_grad(a)) {
      auto& g = ensure_grad(*a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * b->value[i];
    }
    if (wants_grad(b)) {
      auto& g = ensure_grad(*b);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * a->value[i];
    }
  });
}

Var scale(const Var& x, double factor) {
  Tensor out = x->value;
  for (auto& v : out.values()) v *= factor;
  return make_result(std::move(out), {x}, "scale", [factor](Node& self) {
    auto& g = ensure_grad(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Var add_row(const Var& x, const Var& row) {
  require_rank2("add_row", x);
  const std::size_t rows = x->shape()[0], cols = x->shape()[1];
  if (row->value.size() != cols) throw DimensionMismatch(describe("add_row", x, row));
  Tensor out = x->value;
  for (std::size_t t = 0; t < rows; ++t) {
    for (std::size_t j = 0; j < cols; ++j) out.at(t, j) += row->value[j];
  }
  return make_result(std::move(out), {x, row}, "add_row", [rows, cols](Node& self) {
    if (wants_grad(self.parents[0])) {
      auto& g = ensure_grad(*self.parents[0]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants_grad(self.parents[1])) {
      auto& g = ensure_grad(*self.parents[1]);
      for (std::size_t t = 0; t < rows; ++t) {
        for (std::size_t j = 0; j < cols; ++j) g[j] += self.grad.at(t, j);
      }
    }
  });
}

Var tanh(const Var& x) {
  Tensor out = x->value;
  for (auto& v : out.values()) v = std::tanh(v);
  return make_result(std::move(out), {x}, "tanh", [](Node& self) {
    auto& g = ensure_grad(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.value[i];
      g[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x->value;
  for (auto& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return make_result(std::move(out), {x}, "sigmoid", [](Node& self) {
    auto& g = ensure_grad(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = self.value[i];
      g[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Var softmax(const Var& x) {
  const std::size_t cols = x->value.cols();
  const std::size_t rows = x->value.size() / cols;
  Tensor out = x->value;
  for (std::size_t r = 0; r < rows; ++r) {
    double* z = out.data() + r * cols;
    const double mx = *std::max_element(z, z + cols);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) total += (z[j] = std::exp(z[j] - mx));
    for (std::size_t j = 0; j < cols; ++j) z[j] /= total;
  }
  return make_result(std::move(out), {x}, "softmax", [rows, cols](Node& self) {
    auto& g = ensure_grad(*self.parents[0]);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * cols;
      const double* gy = self.grad.data() + r * cols;
      const double inner = dot(y, gy, cols);
      for (std::size_t j = 0; j < cols; ++j) g[r * cols + j] += y[j] * (gy[j] - inner);
    }
  });
}

Var activation(const Var& x, Activation kind) {
  switch (kind) {
    case Activation::kTanh: return tanh(x);
    case Activation::kSigmoid: return sigmoid(x);
    case Activation::kSoftmax: return softmax(x);
  }
  return x;
}

Var concat(std::span<const Var> inputs, std::size_t axis) {
  if (inputs.empty()) throw EmptyInput("concat of an empty list");
  const Shape& first = inputs.front()->shape();
  if (axis >= first.size()) throw DimensionMismatch("concat axis out of range");
  if (inputs.size() == 1) return inputs.front();

  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& in : inputs) {
    const Shape& s = in->shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) {
      throw DimensionMismatch("concat: " + shape_string(first) + " vs " +
                              shape_string(s) + " on axis " + std::to_string(axis));
    }
    widths.push_back(s[axis] * inner);
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  Tensor out(out_shape);
  const std::size_t row_len = total * inner;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const double* src = inputs[i]->value.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src + o * widths[i], widths[i], out.data() + o * row_len + offset);
    }
    offset += widths[i];
  }
  std::vector<Var> parents(inputs.begin(), inputs.end());
  return make_result(std::move(out), std::move(parents), "concat",
                     [widths, outer, row_len](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t i = 0; i < self.parents.size(); ++i) {
                         const Var& p = self.parents[i];
                         if (wants_grad(p)) {
                           double* g = ensure_grad(*p).data();
                           for (std::size_t o = 0; o < outer; ++o) {
                             axpy(1.0, self.grad.data() + o * row_len + offset,
                                  g + o * widths[i], widths[i]);
                           }
                         }
                         offset += widths[i];
                       }
                     });
}

Var concat(std::initializer_list<Var> inputs, std::size_t axis) {
  return concat(std::span<const Var>(inputs.begin(), inputs.size()), axis);
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t count) {
  require_rank2("slice_rows", x);
  const std::size_t cols = x->shape()[1];
  if (begin + count > x->shape()[0] || count == 0) {
    throw DimensionMismatch("slice_rows out of range on " + shape_string(x->shape()));
  }
  Tensor out({count, cols});
  std::copy_n(x->value.data() + begin * cols, count * cols, out.data());
  return make_result(std::move(out), {x}, "slice_rows", [begin, cols](Node& self) {
    auto& g = ensure_grad(*self.parents[0]);
    axpy(1.0, self.grad.data(), g.data() + begin * cols, self.grad.size());
  });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t count) {
  require_rank2("slice_cols", x);
  const std::size_t rows = x->shape()[0], cols = x->shape()[1];
  if (begin + count > cols || count == 0) {
    throw DimensionMismatch("slice_cols out of range on " + shape_string(x->shape()));
  }
  Tensor out({rows, count});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x->value.data() + r * cols + begin, count, out.data() + r * count);
  }
  return make_result(std::move(out), {x}, "slice_cols",
                     [rows, cols, begin, count](Node& self) {
                       auto& g = ensure_grad(*self.parents[0]);
                       for (std::size_t r = 0; r < rows; ++r) {
                         axpy(1.0, self.grad.data() + r * count,
                              g.data() + r * cols + begin, count);
                       }
                     });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x->value.reshaped(std::move(shape));
  return make_result(std::move(out), {x}, "reshape", [](Node& self) {
    auto& g = ensure_grad(*self.parents[0]);
    axpy(1.0, self.grad.data(), g.data(), g.size());
  });
}

Var mean_rows(const Var& x) {
  require_rank2("mean_rows", x);
  const std::size_t rows = x->shape()[0], cols = x->shape()[1];
  Tensor out({1, cols});
  // Accumulate row by row so the result does not depend on anything but order.
  for (std::size_t r = 0; r < rows; ++r) axpy(1.0, x->value.data() + r * cols, out.data(), cols);
  const double inv = 1.0 / static_cast<double>(rows);
  for (auto& v : out.values()) v *= inv;
  return make_result(std::move(out), {x}, "mean_rows", [rows, cols, inv](Node& self) {
    auto& g = ensure_grad(*self.parents[0]);
    for (std::size_t r = 0; r < rows; ++r) axpy(inv, self.grad.data(), g.data() + r * cols, cols);
  });
}

Var repeat_rows(const Var& x, std::size_t count) {
  const std::size_t cols = x->value.size();
  if (x->value.rank() == 2 && x->shape()[0] != 1) {
    throw DimensionMismatch("repeat_rows expects a single row, got " +
                            shape_string(x->shape()));
  }
  Tensor out({count, cols});
  for (std::size_t r = 0; r < count; ++r) std::copy_n(x->value.data(), cols, out.data() + r * cols);
  return make_result(std::move(out), {x}, "repeat_rows", [count, cols](Node& self) {
    auto& g = ensure_grad(*self.parents[0]);
    for (std::size_t r = 0; r < count; ++r) axpy(1.0, self.grad.data() + r * cols, g.data(), cols);
  });
}

Var gather_row(const Var& table, std::size_t index) {
  require_rank2("gather_row", table);
  const std::size_t vocab = table->shape()[0], dim = table->shape()[1];
  if (index >= vocab) {
    throw OutOfVocabulary("token id " + std::to_string(index) +
                          " outside vocabulary of size " + std::to_string(vocab));
  }
  Tensor out({1, dim});
  std::copy_n(table->value.data() + index * dim, dim, out.data());
  return make_result(std::move(out), {table}, "gather_row", [index, dim](Node& self) {
    auto& g = ensure_grad(*self.parents[0]);
    axpy(1.0, self.grad.data(), g.data() + index * dim, dim);
  });
}

Var sum(const Var& x) {
  double total = 0.0;
  for (double v : x->value.values()) total += v;
  return make_result(Tensor({1}, total), {x}, "sum", [](Node& self) {
    auto& g = ensure_grad(*self.parents[0]);
    for (auto& v : g.values()) v += self.grad[0];
  });
}

Var mean(const Var& x) {
  const double inv = 1.0 / static_cast<double>(x->value.size());
  double total = 0.0;
  for (double v : x->value.values()) total += v;
  return make_result(Tensor({1}, total * inv), {x}, "mean", [inv](Node& self) {
    auto& g = ensure_grad(*self.parents[0]);
    for (auto& v : g.values()) v += self.grad[0] * inv;
  });
}

Var mse(const Var& prediction, const Var& target) {
  const std::size_t n = prediction->value.size();
  if (target->value.size() != n || n == 0) {
    throw DimensionMismatch(describe("mse", prediction, target));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = prediction->value[i] - target->value[i];
    total += d * d;
  }
  const double inv = 1.0 / static_cast<double>(n);
  return make_result(Tensor({1}, total * inv), {prediction, target}, "mse",
                     [n, inv](Node& self) {
                       const Var& p = self.parents[0];
                       const Var& t = self.parents[1];
                       const double g0 = self.grad[0] * 2.0 * inv;
                       for (std::size_t side = 0; side < 2; ++side) {
                         const Var& v = self.parents[side];
                         if (!wants_grad(v)) continue;
                         auto& g = ensure_grad(*v);
                         const double sign = side == 0 ? 1.0 : -1.0;
                         for (std::size_t i = 0; i < n; ++i) {
                           g[i] += sign * g0 * (p->value[i] - t->value[i]);
                         }
                       }
                     });
}

Var cosine_distance(const Var& a, const Var& b) {
  const std::size_t n = a->value.size();
  if (b->value.size() != n || n == 0) {
    throw DimensionMismatch(describe("cosine_distance", a, b));
  }
  const double ab = dot(a->value.data(), b->value.data(), n);
  const double na = std::sqrt(dot(a->value.data(), a->value.data(), n));
  const double nb = std::sqrt(dot(b->value.data(), b->value.data(), n));
  if (na == 0.0 || nb == 0.0) throw ZeroVector("cosine distance of a zero-norm vector");
  const double cos = ab / (na * nb);
  return make_result(Tensor({1}, 1.0 - cos), {a, b}, "cosine_distance",
                     [n, na, nb, cos](Node& self) {
                       const double g0 = self.grad[0];
                       // d(cos)/da = b/(|a||b|) - cos * a/|a|^2
                       for (std::size_t side = 0; side < 2; ++side) {
                         const Var& x = self.parents[side];
                         if (!wants_grad(x)) continue;
                         const Var& y = self.parents[1 - side];
                         const double nx = side == 0 ? na : nb;
                         auto& g = ensure_grad(*x);
                         for (std::size_t i = 0; i < n; ++i) {
                           const double dcos = y->value[i] / (na * nb) -
                                               cos * x->value[i] / (nx * nx);
                           g[i] -= g0 * dcos;
                         }
                       }
                     });
}

Var cross_entropy(const Var& logits, std::span<const std::size_t> targets) {
  require_rank2("cross_entropy", logits);
  const std::size_t rows = logits->shape()[0], vocab = logits->shape()[1];
  if (targets.size() != rows) {
    throw LengthMismatch("cross_entropy: " + std::to_string(rows) + " logit rows vs " +
                         std::to_string(targets.size()) + " targets");
  }
  Tensor probs({rows, vocab});
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= vocab) throw OutOfVocabulary("cross_entropy target out of range");
    const double* z = logits->value.data() + r * vocab;
    const double mx = *std::max_element(z, z + vocab);
    double s = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) s += (probs.at(r, j) = std::exp(z[j] - mx));
    for (std::size_t j = 0; j < vocab; ++j) probs.at(r, j) /= s;
    total += (mx + std::log(s)) - z[targets[r]];
  }
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return make_result(Tensor({1}, total), {logits}, "cross_entropy",
                     [probs = std::move(probs), tgt = std::move(tgt), vocab](Node& self) {
                       auto& g = ensure_grad(*self.parents[0]);
                       const double g0 = self.grad[0];
                       for (std::size_t r = 0; r < tgt.size(); ++r) {
                         for (std::size_t j = 0; j < vocab; ++j) {
                           g[r * vocab + j] += g0 * probs.at(r, j);
                         }
                         g[r * vocab + tgt[r]] -= g0;
                       }
                     });
}

double scalar(const Var& x) {
  if (x->value.size() != 1) {
    throw NonScalarRoot("expected a scalar, got shape " + shape_string(x->shape()));
  }
  return x->value[0];
}

namespace {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

std::vector<std::size_t> probe_indices(std::size_t size, std::size_t max_coords, Rng& rng) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  if (max_coords == 0 || max_coords >= size) return idx;
  for (std::size_t i = 0; i < max_coords; ++i) {
    std::swap(idx[i], idx[i + rng.uniform_index(size - i)]);
  }
  idx.resize(max_coords);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

double grad_check(const std::function<Var(const Var&)>& f, const Tensor& params,
                  double step) {
  if (!(step > 0.0)) throw InvalidConfig("grad_check step must be positive");
  auto p = parameter(params);
  auto analytic_root = f(p);
  backward(analytic_root);
  const Tensor analytic = p->grad.empty() ? Tensor(params.shape()) : p->grad;

  NoGradGuard no_grad;
  const double base1 = scalar(f(constant(params)));
  const double base2 = scalar(f(constant(params)));
  if (base1 != base2 || base1 != scalar(analytic_root)) {
    throw NonDeterministicFunction("two forward evaluations differ");
  }
  double worst = 0.0;
  Tensor probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = scalar(f(constant(probe)));
    probe[i] = orig - step;
    const double down = scalar(f(constant(probe)));
    probe[i] = orig;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * step)));
  }
  return worst;
}

double grad_check(const std::function<Var()>& f, std::span<const Var> params,
                  const GradCheckOptions& options) {
  if (!(options.step > 0.0)) throw InvalidConfig("grad_check step must be positive");
  for (const auto& p : params) p->grad = Tensor();
  auto root = f();
  backward(root);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    analytic.push_back(p->grad.empty() ? Tensor(p->value.shape()) : p->grad);
  }

  NoGradGuard no_grad;
  const double base1 = scalar(f());
  const double base2 = scalar(f());
  if (base1 != base2 || base1 != scalar(root)) {
    throw NonDeterministicFunction("two forward evaluations differ");
  }
  Rng rng(options.seed);
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& value = params[k]->value;
    for (std::size_t i : probe_indices(value.size(), options.max_coords_per_tensor, rng)) {
      const double orig = value[i];
      value[i] = orig + options.step;
      const double up = scalar(f());
      value[i] = orig - options.step;
      const double down = scalar(f());
      value[i] = orig;
      worst = std::max(worst,
                       relative_error(analytic[k][i], (up - down) / (2.0 * options.step)));
    }
  }
  return worst;
}

}  // namespace sempos::ad
