#include "ctp/autodiff.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <unordered_set>

#include "ctp/errors.hpp"

namespace ctp::ad {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

MatMap mat(Tensor& t) { return MatMap(t.data(), t.rows(), t.cols()); }
ConstMatMap mat(const Tensor& t) { return ConstMatMap(t.data(), t.rows(), t.cols()); }

std::shared_ptr<Node> make_node(Tensor value, std::vector<Var> parents, const char* op) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  for (const auto& p : parents)
    if (p.requires_grad()) n->requires_grad = true;
  if (n->requires_grad) {
    n->grad = Tensor::zeros(n->value.shape());
    for (const auto& p : parents) n->parents.push_back(p.node());
  }
  return n;
}

Tensor& pgrad(const std::shared_ptr<Node>& p) { return p->grad; }

bool wants_grad(const std::shared_ptr<Node>& p) { return p->requires_grad; }

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw DimensionError(std::string(op) + ": shape mismatch " + a.value().shape_str() + " vs " +
                         b.value().shape_str());
}

}  // namespace

const Tensor& Var::grad() const {
  if (!node_->requires_grad) throw ContractError("grad(): node does not require grad");
  return node_->grad;
}

Var leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->requires_grad = requires_grad;
  if (requires_grad) n->grad = Tensor::zeros(value.shape());
  n->value = std::move(value);
  return Var(n);
}

Var constant(Tensor value) { return leaf(std::move(value), false); }

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows())
    throw DimensionError("matmul: incompatible shapes " + av.shape_str() + " x " + bv.shape_str());
  Tensor out({av.rows(), bv.cols()});
  mat(out) = mat(av) * mat(bv);
  auto n = make_node(std::move(out), {a, b}, "matmul");
  if (n->requires_grad) {
    auto an = a.node();
    auto bn = b.node();
    n->backward_fn = [an, bn](Node& self) {
      if (wants_grad(an)) mat(pgrad(an)) += mat(self.grad) * mat(bn->value).transpose();
      if (wants_grad(bn)) mat(pgrad(bn)) += mat(an->value).transpose() * mat(self.grad);
    };
  }
  return Var(n);
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  auto n = make_node(std::move(out), {a, b}, "add");
  if (n->requires_grad) {
    auto an = a.node();
    auto bn = b.node();
    n->backward_fn = [an, bn](Node& self) {
      for (auto& p : {an, bn})
        if (wants_grad(p))
          for (std::int64_t i = 0; i < self.grad.size(); ++i) pgrad(p)[i] += self.grad[i];
    };
  }
  return Var(n);
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  auto n = make_node(std::move(out), {a, b}, "sub");
  if (n->requires_grad) {
    auto an = a.node();
    auto bn = b.node();
    n->backward_fn = [an, bn](Node& self) {
      if (wants_grad(an))
        for (std::int64_t i = 0; i < self.grad.size(); ++i) pgrad(an)[i] += self.grad[i];
      if (wants_grad(bn))
        for (std::int64_t i = 0; i < self.grad.size(); ++i) pgrad(bn)[i] -= self.grad[i];
    };
  }
  return Var(n);
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  auto n = make_node(std::move(out), {a, b}, "mul");
  if (n->requires_grad) {
    auto an = a.node();
    auto bn = b.node();
    n->backward_fn = [an, bn](Node& self) {
      if (wants_grad(an))
        for (std::int64_t i = 0; i < self.grad.size(); ++i)
          pgrad(an)[i] += self.grad[i] * bn->value[i];
      if (wants_grad(bn))
        for (std::int64_t i = 0; i < self.grad.size(); ++i)
          pgrad(bn)[i] += self.grad[i] * an->value[i];
    };
  }
  return Var(n);
}

Var add_rowwise(const Var& m, const Var& v) {
  const Tensor& mv = m.value();
  const Tensor& vv = v.value();
  if (mv.rank() != 2 || vv.size() != mv.cols())
    throw DimensionError("add_rowwise: " + mv.shape_str() + " + " + vv.shape_str());
  Tensor out = mv;
  const std::int64_t rows = mv.rows(), cols = mv.cols();
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) out[r * cols + c] += vv[c];
  auto n = make_node(std::move(out), {m, v}, "add_rowwise");
  if (n->requires_grad) {
    auto mn = m.node();
    auto vn = v.node();
    n->backward_fn = [mn, vn, rows, cols](Node& self) {
      if (wants_grad(mn))
        for (std::int64_t i = 0; i < self.grad.size(); ++i) pgrad(mn)[i] += self.grad[i];
      if (wants_grad(vn))
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t c = 0; c < cols; ++c) pgrad(vn)[c] += self.grad[r * cols + c];
    };
  }
  return Var(n);
}

Var mul_rowvec(const Var& m, const Var& v) {
  const Tensor& mv = m.value();
  const Tensor& vv = v.value();
  if (mv.rank() != 2 || vv.size() != mv.cols())
    throw DimensionError("mul_rowvec: " + mv.shape_str() + " * " + vv.shape_str());
  Tensor out = mv;
  const std::int64_t rows = mv.rows(), cols = mv.cols();
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) out[r * cols + c] *= vv[c];
  auto n = make_node(std::move(out), {m, v}, "mul_rowvec");
  if (n->requires_grad) {
    auto mn = m.node();
    auto vn = v.node();
    n->backward_fn = [mn, vn, rows, cols](Node& self) {
      if (wants_grad(mn))
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t c = 0; c < cols; ++c)
            pgrad(mn)[r * cols + c] += self.grad[r * cols + c] * vn->value[c];
      if (wants_grad(vn))
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t c = 0; c < cols; ++c)
            pgrad(vn)[c] += self.grad[r * cols + c] * mn->value[r * cols + c];
    };
  }
  return Var(n);
}

Var rowscale(const Var& m, const Var& s) {
  const Tensor& mv = m.value();
  const Tensor& sv = s.value();
  if (mv.rank() != 2 || sv.size() != mv.rows())
    throw DimensionError("rowscale: " + mv.shape_str() + " * " + sv.shape_str());
  Tensor out = mv;
  const std::int64_t rows = mv.rows(), cols = mv.cols();
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) out[r * cols + c] *= sv[r];
  auto n = make_node(std::move(out), {m, s}, "rowscale");
  if (n->requires_grad) {
    auto mn = m.node();
    auto sn = s.node();
    n->backward_fn = [mn, sn, rows, cols](Node& self) {
      if (wants_grad(mn))
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t c = 0; c < cols; ++c)
            pgrad(mn)[r * cols + c] += self.grad[r * cols + c] * sn->value[r];
      if (wants_grad(sn))
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t c = 0; c < cols; ++c)
            pgrad(sn)[r] += self.grad[r * cols + c] * mn->value[r * cols + c];
    };
  }
  return Var(n);
}

Var scale(const Var& a, double c) {
  Tensor out = a.value();
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= c;
  auto n = make_node(std::move(out), {a}, "scale");
  if (n->requires_grad) {
    auto an = a.node();
    n->backward_fn = [an, c](Node& self) {
      for (std::int64_t i = 0; i < self.grad.size(); ++i) pgrad(an)[i] += self.grad[i] * c;
    };
  }
  return Var(n);
}

Var silu(const Var& a) {
  Tensor out = a.value();
  for (std::int64_t i = 0; i < out.size(); ++i) {
    const double x = out[i];
    out[i] = x / (1.0 + std::exp(-x));
  }
  auto n = make_node(std::move(out), {a}, "silu");
  if (n->requires_grad) {
    auto an = a.node();
    n->backward_fn = [an](Node& self) {
      for (std::int64_t i = 0; i < self.grad.size(); ++i) {
        const double x = an->value[i];
        const double s = 1.0 / (1.0 + std::exp(-x));
        pgrad(an)[i] += self.grad[i] * (s * (1.0 + x * (1.0 - s)));
      }
    };
  }
  return Var(n);
}

Var sigmoid(const Var& a) {
  Tensor out = a.value();
  for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  auto n = make_node(std::move(out), {a}, "sigmoid");
  if (n->requires_grad) {
    auto an = a.node();
    auto on = n;
    n->backward_fn = [an, on](Node& self) {
      for (std::int64_t i = 0; i < self.grad.size(); ++i) {
        const double s = on->value[i];
        pgrad(an)[i] += self.grad[i] * s * (1.0 - s);
      }
    };
  }
  return Var(n);
}

Var log_clamped(const Var& a, double floor, std::int64_t* clamp_count) {
  if (!(floor > 0.0 && floor < 0.5)) throw ContractError("log_clamped: floor outside (0, 0.5)");
  Tensor out = a.value();
  std::vector<bool> clamped(static_cast<std::size_t>(out.size()), false);
  for (std::int64_t i = 0; i < out.size(); ++i) {
    double x = out[i];
    if (x < floor) {
      x = floor;
      clamped[static_cast<std::size_t>(i)] = true;
      if (clamp_count) ++(*clamp_count);
    }
    out[i] = std::log(x);
  }
  auto n = make_node(std::move(out), {a}, "log_clamped");
  if (n->requires_grad) {
    auto an = a.node();
    n->backward_fn = [an, clamped = std::move(clamped)](Node& self) {
      for (std::int64_t i = 0; i < self.grad.size(); ++i)
        if (!clamped[static_cast<std::size_t>(i)])
          pgrad(an)[i] += self.grad[i] / an->value[i];
    };
  }
  return Var(n);
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: empty input");
  const std::int64_t rows = parts[0].value().rows();
  std::int64_t total = 0;
  for (const auto& p : parts) {
    if (p.value().rank() != 2 || p.value().rows() != rows)
      throw DimensionError("concat_cols: row mismatch");
    total += p.value().cols();
  }
  Tensor out({rows, total});
  std::int64_t off = 0;
  for (const auto& p : parts) {
    const std::int64_t c = p.value().cols();
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t j = 0; j < c; ++j) out[r * total + off + j] = p.value()[r * c + j];
    off += c;
  }
  auto n = make_node(std::move(out), parts, "concat_cols");
  if (n->requires_grad) {
    std::vector<std::shared_ptr<Node>> pn;
    std::vector<std::int64_t> offs;
    std::int64_t o = 0;
    for (const auto& p : parts) {
      pn.push_back(p.node());
      offs.push_back(o);
      o += p.value().cols();
    }
    n->backward_fn = [pn, offs, rows, total](Node& self) {
      for (std::size_t k = 0; k < pn.size(); ++k) {
        if (!wants_grad(pn[k])) continue;
        const std::int64_t c = pn[k]->value.cols();
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t j = 0; j < c; ++j)
            pgrad(pn[k])[r * c + j] += self.grad[r * total + offs[k] + j];
      }
    };
  }
  return Var(n);
}

Var replace_cols(const Var& x, std::int64_t c0, std::int64_t c1, const Var& repl) {
  const Tensor& xv = x.value();
  const Tensor& rv = repl.value();
  if (xv.rank() != 2 || c0 < 0 || c1 > xv.cols() || c0 >= c1)
    throw DimensionError("replace_cols: bad column range");
  if (rv.rank() != 2 || rv.rows() != xv.rows() || rv.cols() != c1 - c0)
    throw DimensionError("replace_cols: replacement shape " + rv.shape_str());
  Tensor out = xv;
  const std::int64_t rows = xv.rows(), cols = xv.cols(), w = c1 - c0;
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t j = 0; j < w; ++j) out[r * cols + c0 + j] = rv[r * w + j];
  auto n = make_node(std::move(out), {x, repl}, "replace_cols");
  if (n->requires_grad) {
    auto xn = x.node();
    auto rn = repl.node();
    n->backward_fn = [xn, rn, rows, cols, c0, w](Node& self) {
      if (wants_grad(xn))
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t c = 0; c < cols; ++c)
            if (c < c0 || c >= c0 + w) pgrad(xn)[r * cols + c] += self.grad[r * cols + c];
      if (wants_grad(rn))
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t j = 0; j < w; ++j)
            pgrad(rn)[r * w + j] += self.grad[r * cols + c0 + j];
    };
  }
  return Var(n);
}

Var sum(const Var& a) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a.value().size(); ++i) s += a.value()[i];
  auto n = make_node(Tensor::from_data({1}, {s}), {a}, "sum");
  if (n->requires_grad) {
    auto an = a.node();
    n->backward_fn = [an](Node& self) {
      for (std::int64_t i = 0; i < pgrad(an).size(); ++i) pgrad(an)[i] += self.grad[0];
    };
  }
  return Var(n);
}

Var detach(const Var& a) { return constant(a.value()); }

Var mean_row_sumsq(const Var& a) {
  if (a.value().rank() != 2) throw DimensionError("mean_row_sumsq: rank-2 input required");
  const double inv_rows = 1.0 / static_cast<double>(a.value().rows());
  return scale(sum(mul(a, a)), inv_rows);
}

void backward(const Var& loss) {
  if (!loss.defined() || loss.value().size() != 1)
    throw ContractError("backward: loss must be a scalar");
  if (!loss.requires_grad()) return;  // nothing depends on any parameter

  // Post-order DFS, then reverse: each node visited exactly once.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

}  // namespace ctp::ad
