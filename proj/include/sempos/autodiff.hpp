#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "sempos/tensor.hpp"

namespace sempos::ad {

struct Node;
using Var = std::shared_ptr<Node>;

// One value in the reverse-mode graph. Nodes are created in topological order
// (parents always exist before children), so the graph is acyclic.
struct Node {
  Tensor value;
  // Same shape as `value` once allocated; empty until a gradient reaches it.
  Tensor grad;
  bool requires_grad = false;
  std::vector<Var> parents;
  // Propagates `grad` of this node into its parents' grads.
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  const Shape& shape() const { return value.shape(); }
  bool is_leaf() const { return !backward_fn; }
};

Var constant(Tensor value);
Var parameter(Tensor value);

// Gradient recording is on by default; the guard turns it off for the current
// thread (evaluation and finite-difference probes).
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Leaf gradients accumulate across backward calls until zeroed explicitly.
// Interior gradients are recomputed on every call, so running backward twice
// on the same graph doubles the leaf gradients exactly.
void backward(const Var& root);
void zero_grad(std::span<const Var> params);

Tensor& ensure_grad(Node& node);

// --- linear algebra ---
Var matmul(const Var& a, const Var& b);
// x [T x in] * weight^T [in x out] + bias [out]; bias may be null.
Var linear(const Var& x, const Var& weight, const Var& bias);

// --- elementwise ---
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
// Adds a single row (shape [n] or [1 x n]) to every row of x.
Var add_row(const Var& x, const Var& row);

enum class Activation { kTanh, kSigmoid, kSoftmax };
Var tanh(const Var& x);
Var sigmoid(const Var& x);
// Row-wise softmax over the last axis, max-subtracted.
Var softmax(const Var& x);
Var activation(const Var& x, Activation kind);

// --- structure ---
Var concat(std::span<const Var> inputs, std::size_t axis);
Var concat(std::initializer_list<Var> inputs, std::size_t axis);
Var slice_rows(const Var& x, std::size_t begin, std::size_t count);
Var slice_cols(const Var& x, std::size_t begin, std::size_t count);
Var reshape(const Var& x, Shape shape);
// [T x n] -> [1 x n] time mean.
Var mean_rows(const Var& x);
// [1 x n] (or [n]) -> [count x n].
Var repeat_rows(const Var& x, std::size_t count);
// Row `index` of a [V x E] table as [1 x E]. Throws OutOfVocabulary.
Var gather_row(const Var& table, std::size_t index);

// --- reductions and losses (all return shape [1]) ---
Var sum(const Var& x);
Var mean(const Var& x);
Var mse(const Var& prediction, const Var& target);
// 1 - cos(a, b). Throws ZeroVector if either input has zero norm.
Var cosine_distance(const Var& a, const Var& b);
// Sum over rows of -log softmax(logits)[row, target[row]].
Var cross_entropy(const Var& logits, std::span<const std::size_t> targets);

double scalar(const Var& x);

// --- finite-difference checking ---
struct GradCheckOptions {
  double step = 1e-5;
  // Coordinates probed per parameter tensor; 0 probes every coordinate.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

// Max over probed coordinates of
//   |analytic - central difference| / max(1, |analytic|, |numeric|).
// Throws NonDeterministicFunction if two forward evaluations disagree.
double grad_check(const std::function<Var(const Var&)>& f, const Tensor& params,
                  double step = 1e-5);
// Same check for a function of existing parameter nodes, perturbed in place.
// Leaf gradients of `params` are overwritten.
double grad_check(const std::function<Var()>& f, std::span<const Var> params,
                  const GradCheckOptions& options = {});

}  // namespace sempos::ad
