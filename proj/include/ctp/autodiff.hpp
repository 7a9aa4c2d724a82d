#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "ctp/tensor.hpp"

namespace ctp::ad {

// Reverse-mode tape over Tensor values. Each op records its parents and a
// closure computing the vector-Jacobian product; backward() walks the graph
// from the loss in reverse topological order, visiting each node once.
struct Node {
  Tensor value;
  Tensor grad;  // allocated iff requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // accumulates into parents' grads
  const char* op = "leaf";
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var leaf(Tensor value, bool requires_grad);
Var constant(Tensor value);

// Core primitives. Shapes are validated; mismatches throw DimensionError.
Var matmul(const Var& a, const Var& b);            // [m,k]x[k,n] -> [m,n]
Var add(const Var& a, const Var& b);               // same shape
Var sub(const Var& a, const Var& b);               // same shape
Var mul(const Var& a, const Var& b);               // elementwise, same shape
Var add_rowwise(const Var& m, const Var& v);       // [B,n] + [n]
Var mul_rowvec(const Var& m, const Var& v);        // [B,n] * [n] per row
Var rowscale(const Var& m, const Var& s);          // [B,n] * [B] per column
Var scale(const Var& a, double c);
Var silu(const Var& a);                            // x * sigmoid(x)
Var sigmoid(const Var& a);
// log with output clamped to [log(floor), log(1-floor)] pre-image; counts
// how many entries were clamped if counter is non-null.
Var log_clamped(const Var& a, double floor, std::int64_t* clamp_count);
Var concat_cols(const std::vector<Var>& parts);    // [B,n1],[B,n2],... -> [B,sum]
// Overwrite columns [c0,c1) of x with repl; gradient is blocked through the
// overwritten region of x and passes to repl instead.
Var replace_cols(const Var& x, std::int64_t c0, std::int64_t c1, const Var& repl);
Var sum(const Var& a);                             // -> [1]
Var detach(const Var& a);

Var mean_row_sumsq(const Var& a);  // mean over rows of the per-row squared l2 norm

// Runs reverse-mode accumulation from a scalar loss. Throws ContractError if
// loss is not a single element.
void backward(const Var& loss);

}  // namespace ctp::ad
