#include "granenc/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace granenc::ag {

namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_to_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

void require_same_graph(Var a, Var b) {
  if (&a.graph() != &b.graph()) throw ContractError("operands belong to different graphs");
}

// out += a * b, with a: [r,k], b: [k,c].
void gemm_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t r = a.rows(), k = a.cols(), c = b.cols();
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < r; ++i) {
    double* orow = po + i * c;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * c;
      for (std::size_t j = 0; j < c; ++j) orow[j] += av * brow[j];
    }
  }
}

// out += a^T * b, with a: [k,r], b: [k,c].
void gemm_tn_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t k = a.rows(), r = a.cols(), c = b.cols();
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = pb + p * c;
    for (std::size_t i = 0; i < r; ++i) {
      const double av = pa[p * r + i];
      if (av == 0.0) continue;
      double* orow = po + i * c;
      for (std::size_t j = 0; j < c; ++j) orow[j] += av * brow[j];
    }
  }
}

// out += a * b^T, with a: [r,k], b: [c,k].
void gemm_nt_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t r = a.rows(), k = a.cols(), c = b.rows();
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < c; ++j) {
      const double* brow = pb + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      po[i * c + j] += s;
    }
  }
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

// ---------------------------------------------------------------- Graph

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  Node& n = nodes_.back();
  if (!n.value) n.value = &n.storage;
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
  require_rank2(value, "constant");
  Node n;
  n.storage = std::move(value);
  return push(std::move(n));
}

Var Graph::input(Tensor value) {
  require_rank2(value, "input");
  Node n;
  n.storage = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  require_rank2(p.value, "param");
  Node n;
  n.value = &p.value;
  n.grad = &p.grad;
  n.requires_grad = true;
  Var v = push(std::move(n));
  param_nodes_.emplace(&p, v.id_);
  return v;
}

Var Graph::record(Tensor value, std::span<const Var> parents, BackwardFn backward) {
  Node n;
  n.storage = std::move(value);
  for (Var p : parents) {
    if (p.graph_ != this) throw ContractError("operand belongs to a different graph");
    n.requires_grad = n.requires_grad || nodes_[p.id_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Tensor* Graph::grad_sink(Var v) {
  Node& n = nodes_[v.id_];
  if (!n.requires_grad) return nullptr;
  if (!n.grad) {
    n.grad_storage = Tensor(n.value->shape(), 0.0);
    n.grad = &n.grad_storage;
  }
  return n.grad;
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[v.id_];
  if (n.grad) return *n.grad;
  return Tensor(n.value->shape(), 0.0);
}

void Graph::backward(Var root) {
  if (root.graph_ != this) throw ContractError("backward: root belongs to a different graph");
  const Tensor& rv = value(root);
  if (rv.size() != 1) throw ShapeError("backward: root must be a scalar, got " + shape_to_string(rv.shape()));
  if (!nodes_[root.id_].requires_grad) return;
  (*grad_sink(root))[0] += 1.0;
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || !n.grad) continue;
    n.backward(*this, *n.grad);
  }
}

// ---------------------------------------------------------------- linear algebra

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: " + shape_to_string(av.shape()) + " x " + shape_to_string(bv.shape()));
  }
  Tensor out({av.rows(), bv.cols()}, 0.0);
  gemm_acc(av, bv, out);
  const Var parents[] = {a, b};
  return a.graph().record(std::move(out), parents, [a, b](Graph& g, const Tensor& dy) {
    if (Tensor* ga = g.grad_sink(a)) gemm_nt_acc(dy, b.value(), *ga);
    if (Tensor* gb = g.grad_sink(b)) gemm_tn_acc(a.value(), dy, *gb);
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw ShapeError("matmul_nt: " + shape_to_string(av.shape()) + " x " + shape_to_string(bv.shape()) + "^T");
  }
  Tensor out({av.rows(), bv.rows()}, 0.0);
  gemm_nt_acc(av, bv, out);
  const Var parents[] = {a, b};
  return a.graph().record(std::move(out), parents, [a, b](Graph& g, const Tensor& dy) {
    if (Tensor* ga = g.grad_sink(a)) gemm_acc(dy, b.value(), *ga);
    if (Tensor* gb = g.grad_sink(b)) gemm_tn_acc(dy, a.value(), *gb);
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  Tensor out({av.cols(), av.rows()});
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out.at(j, i) = av.at(i, j);
  const Var parents[] = {a};
  return a.graph().record(std::move(out), parents, [a](Graph& g, const Tensor& dy) {
    Tensor* ga = g.grad_sink(a);
    for (std::size_t i = 0; i < ga->rows(); ++i)
      for (std::size_t j = 0; j < ga->cols(); ++j) ga->at(i, j) += dy.at(j, i);
  });
}

Var add(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  add_into(out, b.value());
  const Var parents[] = {a, b};
  return a.graph().record(std::move(out), parents, [a, b](Graph& g, const Tensor& dy) {
    if (Tensor* ga = g.grad_sink(a)) add_into(*ga, dy);
    if (Tensor* gb = g.grad_sink(b)) add_into(*gb, dy);
  });
}

Var sub(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const Var parents[] = {a, b};
  return a.graph().record(std::move(out), parents, [a, b](Graph& g, const Tensor& dy) {
    if (Tensor* ga = g.grad_sink(a)) add_into(*ga, dy);
    if (Tensor* gb = g.grad_sink(b))
      for (std::size_t i = 0; i < dy.size(); ++i) (*gb)[i] -= dy[i];
  });
}

Var mul(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const Var parents[] = {a, b};
  return a.graph().record(std::move(out), parents, [a, b](Graph& g, const Tensor& dy) {
    if (Tensor* ga = g.grad_sink(a))
      for (std::size_t i = 0; i < dy.size(); ++i) (*ga)[i] += dy[i] * b.value()[i];
    if (Tensor* gb = g.grad_sink(b))
      for (std::size_t i = 0; i < dy.size(); ++i) (*gb)[i] += dy[i] * a.value()[i];
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.storage()) v *= s;
  const Var parents[] = {a};
  return a.graph().record(std::move(out), parents, [a, s](Graph& g, const Tensor& dy) {
    Tensor* ga = g.grad_sink(a);
    for (std::size_t i = 0; i < dy.size(); ++i) (*ga)[i] += dy[i] * s;
  });
}

Var add_row(Var a, Var row) {
  require_same_graph(a, row);
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw ShapeError("add_row: " + shape_to_string(av.shape()) + " + " + shape_to_string(rv.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) += rv[j];
  const Var parents[] = {a, row};
  return a.graph().record(std::move(out), parents, [a, row](Graph& g, const Tensor& dy) {
    if (Tensor* ga = g.grad_sink(a)) add_into(*ga, dy);
    if (Tensor* gr = g.grad_sink(row))
      for (std::size_t i = 0; i < dy.rows(); ++i)
        for (std::size_t j = 0; j < dy.cols(); ++j) (*gr)[j] += dy.at(i, j);
  });
}

Var add_col(Var a, Var col) {
  require_same_graph(a, col);
  const Tensor& av = a.value();
  const Tensor& cv = col.value();
  if (cv.cols() != 1 || cv.rows() != av.rows()) {
    throw ShapeError("add_col: " + shape_to_string(av.shape()) + " + " + shape_to_string(cv.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) += cv[i];
  const Var parents[] = {a, col};
  return a.graph().record(std::move(out), parents, [a, col](Graph& g, const Tensor& dy) {
    if (Tensor* ga = g.grad_sink(a)) add_into(*ga, dy);
    if (Tensor* gc = g.grad_sink(col))
      for (std::size_t i = 0; i < dy.rows(); ++i)
        for (std::size_t j = 0; j < dy.cols(); ++j) (*gc)[i] += dy.at(i, j);
  });
}

Var mul_row(Var a, Var row) {
  require_same_graph(a, row);
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw ShapeError("mul_row: " + shape_to_string(av.shape()) + " * " + shape_to_string(rv.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) *= rv[j];
  const Var parents[] = {a, row};
  return a.graph().record(std::move(out), parents, [a, row](Graph& g, const Tensor& dy) {
    const Tensor& av2 = a.value();
    const Tensor& rv2 = row.value();
    if (Tensor* ga = g.grad_sink(a))
      for (std::size_t i = 0; i < dy.rows(); ++i)
        for (std::size_t j = 0; j < dy.cols(); ++j) ga->at(i, j) += dy.at(i, j) * rv2[j];
    if (Tensor* gr = g.grad_sink(row))
      for (std::size_t i = 0; i < dy.rows(); ++i)
        for (std::size_t j = 0; j < dy.cols(); ++j) (*gr)[j] += dy.at(i, j) * av2.at(i, j);
  });
}

Var broadcast_rows(Var row, std::size_t rows) {
  const Tensor& rv = row.value();
  if (rv.rows() != 1) throw ShapeError("broadcast_rows: expected a single row, got " + shape_to_string(rv.shape()));
  Tensor out({rows, rv.cols()});
  for (std::size_t i = 0; i < rows; ++i) std::copy(rv.data(), rv.data() + rv.cols(), out.row(i).begin());
  const Var parents[] = {row};
  return row.graph().record(std::move(out), parents, [row](Graph& g, const Tensor& dy) {
    Tensor* gr = g.grad_sink(row);
    for (std::size_t i = 0; i < dy.rows(); ++i)
      for (std::size_t j = 0; j < dy.cols(); ++j) (*gr)[j] += dy.at(i, j);
  });
}

Var tanh(Var a) {
  Tensor out = a.value();
  for (double& v : out.storage()) v = std::tanh(v);
  const Var parents[] = {a};
  return a.graph().record(out, parents, [a, out](Graph& g, const Tensor& dy) {
    Tensor* ga = g.grad_sink(a);
    for (std::size_t i = 0; i < dy.size(); ++i) (*ga)[i] += dy[i] * (1.0 - out[i] * out[i]);
  });
}

Var sigmoid(Var a) {
  Tensor out = a.value();
  for (double& v : out.storage()) v = sigmoid_scalar(v);
  const Var parents[] = {a};
  return a.graph().record(out, parents, [a, out](Graph& g, const Tensor& dy) {
    Tensor* ga = g.grad_sink(a);
    for (std::size_t i = 0; i < dy.size(); ++i) (*ga)[i] += dy[i] * out[i] * (1.0 - out[i]);
  });
}

// ---------------------------------------------------------------- structure

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Tensor out({rows, cols});
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy(pv.row(i).begin(), pv.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(off));
    off += pv.cols();
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  return parts[0].graph().record(std::move(out), parts, [owned](Graph& g, const Tensor& dy) {
    std::size_t off2 = 0;
    for (Var p : owned) {
      const std::size_t pc = p.cols();
      if (Tensor* gp = g.grad_sink(p)) {
        for (std::size_t i = 0; i < dy.rows(); ++i)
          for (std::size_t j = 0; j < pc; ++j) gp->at(i, j) += dy.at(i, off2 + j);
      }
      off2 += pc;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column count mismatch");
    rows += p.rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (Var p : parts) data.insert(data.end(), p.value().storage().begin(), p.value().storage().end());
  std::vector<Var> owned(parts.begin(), parts.end());
  return parts[0].graph().record(Tensor({rows, cols}, std::move(data)), parts,
                                 [owned](Graph& g, const Tensor& dy) {
                                   std::size_t off = 0;
                                   for (Var p : owned) {
                                     const std::size_t n = p.value().size();
                                     if (Tensor* gp = g.grad_sink(p))
                                       for (std::size_t i = 0; i < n; ++i) (*gp)[i] += dy[off + i];
                                     off += n;
                                   }
                                 });
}

Var slice_cols(Var a, std::size_t offset, std::size_t length) {
  const Tensor& av = a.value();
  if (offset + length > av.cols()) throw ShapeError("slice_cols: range exceeds " + shape_to_string(av.shape()));
  Tensor out({av.rows(), length});
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < length; ++j) out.at(i, j) = av.at(i, offset + j);
  const Var parents[] = {a};
  return a.graph().record(std::move(out), parents, [a, offset](Graph& g, const Tensor& dy) {
    Tensor* ga = g.grad_sink(a);
    for (std::size_t i = 0; i < dy.rows(); ++i)
      for (std::size_t j = 0; j < dy.cols(); ++j) ga->at(i, offset + j) += dy.at(i, j);
  });
}

Var slice_rows(Var a, std::size_t offset, std::size_t length) {
  const Tensor& av = a.value();
  if (offset + length > av.rows()) throw ShapeError("slice_rows: range exceeds " + shape_to_string(av.shape()));
  const auto first = av.storage().begin() + static_cast<std::ptrdiff_t>(offset * av.cols());
  std::vector<double> data(first, first + static_cast<std::ptrdiff_t>(length * av.cols()));
  const Var parents[] = {a};
  return a.graph().record(Tensor({length, av.cols()}, std::move(data)), parents,
                          [a, offset](Graph& g, const Tensor& dy) {
                            Tensor* ga = g.grad_sink(a);
                            const std::size_t base = offset * dy.cols();
                            for (std::size_t i = 0; i < dy.size(); ++i) (*ga)[base + i] += dy[i];
                          });
}

Var detach(Var a) { return a.graph().constant(a.value()); }

// ---------------------------------------------------------------- reductions

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const Var parents[] = {a};
  return a.graph().record(Tensor({1, 1}, s), parents, [a](Graph& g, const Tensor& dy) {
    Tensor* ga = g.grad_sink(a);
    for (double& v : ga->storage()) v += dy[0];
  });
}

Var max_cols(Var a) {
  const Tensor& av = a.value();
  if (av.cols() == 0) throw ShapeError("max_cols: empty rows");
  Tensor out({av.rows(), 1});
  std::vector<std::size_t> arg(av.rows());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < av.cols(); ++j)
      if (av.at(i, j) > av.at(i, best)) best = j;
    arg[i] = best;
    out[i] = av.at(i, best);
  }
  const Var parents[] = {a};
  return a.graph().record(std::move(out), parents, [a, arg](Graph& g, const Tensor& dy) {
    Tensor* ga = g.grad_sink(a);
    for (std::size_t i = 0; i < arg.size(); ++i) ga->at(i, arg[i]) += dy[i];
  });
}

namespace {

Tensor softmax_value(const Tensor& x) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    const double m = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double& v : r) {
      v = std::exp(v - m);
      z += v;
    }
    for (double& v : r) v /= z;
  }
  return y;
}

}  // namespace

Var softmax_rows(Var a) {
  if (a.cols() == 0) throw ShapeError("softmax_rows: empty rows");
  Tensor y = softmax_value(a.value());
  const Var parents[] = {a};
  return a.graph().record(y, parents, [a, y](Graph& g, const Tensor& dy) {
    Tensor* ga = g.grad_sink(a);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += dy.at(i, j) * y.at(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) ga->at(i, j) += y.at(i, j) * (dy.at(i, j) - dot);
    }
  });
}

Var log_softmax_rows(Var a) {
  if (a.cols() == 0) throw ShapeError("log_softmax_rows: empty rows");
  Tensor p = softmax_value(a.value());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    const double m = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double v : r) z += std::exp(v - m);
    const double lse = m + std::log(z);
    for (double& v : r) v -= lse;
  }
  const Var parents[] = {a};
  return a.graph().record(std::move(out), parents, [a, p](Graph& g, const Tensor& dy) {
    Tensor* ga = g.grad_sink(a);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < p.cols(); ++j) s += dy.at(i, j);
      for (std::size_t j = 0; j < p.cols(); ++j) ga->at(i, j) += dy.at(i, j) - p.at(i, j) * s;
    }
  });
}

Var cross_entropy_sum(Var logits, std::span<const std::int64_t> targets) {
  const Tensor& x = logits.value();
  if (targets.size() != x.rows()) throw ShapeError("cross_entropy_sum: one target per row required");
  for (std::int64_t t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= x.cols()) {
      throw LabelError("target id " + std::to_string(t) + " outside label space of size " + std::to_string(x.cols()));
    }
  }
  Tensor p = softmax_value(x);
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    const double m = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double v : r) z += std::exp(v - m);
    loss += m + std::log(z) - x.at(i, static_cast<std::size_t>(targets[i]));
  }
  std::vector<std::int64_t> tg(targets.begin(), targets.end());
  const Var parents[] = {logits};
  return logits.graph().record(Tensor({1, 1}, loss), parents, [logits, p, tg](Graph& g, const Tensor& dy) {
    Tensor* ga = g.grad_sink(logits);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      for (std::size_t j = 0; j < p.cols(); ++j) ga->at(i, j) += dy[0] * p.at(i, j);
      ga->at(i, static_cast<std::size_t>(tg[i])) -= dy[0];
    }
  });
}

// ---------------------------------------------------------------- fused layers

Var lookup(Graph& g, Parameter& table, std::span<const std::int64_t> ids) {
  const Tensor& tv = table.value;
  const std::size_t d = tv.cols();
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows()) {
      throw LabelError("lookup: id " + std::to_string(ids[i]) + " outside table " + table.name);
    }
    const auto src = tv.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  // The parameter leaf anchors requires_grad; its dense gradient buffer is
  // the parameter's own, so the scatter writes there directly.
  Var anchor = g.param(table);
  std::vector<std::int64_t> idv(ids.begin(), ids.end());
  Parameter* tp = &table;
  const Var parents[] = {anchor};
  return g.record(std::move(out), parents, [tp, idv](Graph&, const Tensor& dy) {
    for (std::size_t i = 0; i < idv.size(); ++i) {
      const auto row = static_cast<std::size_t>(idv[i]);
      if (tp->frozen_row && *tp->frozen_row == row) continue;
      auto dst = tp->grad.row(row);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += dy.at(i, j);
    }
  });
}

Var lstm(Var x, Var w_input, Var w_hidden, Var bias, bool reverse) {
  const Tensor& xv = x.value();
  const Tensor& wx = w_input.value();
  const Tensor& wh = w_hidden.value();
  const Tensor& bv = bias.value();
  const std::size_t steps = xv.rows();
  const std::size_t h = wh.rows();
  if (wx.rows() != xv.cols() || wx.cols() != 4 * h || wh.cols() != 4 * h || bv.rows() != 1 || bv.cols() != 4 * h) {
    throw ShapeError("lstm: inconsistent shapes x" + shape_to_string(xv.shape()) + " Wx" +
                     shape_to_string(wx.shape()) + " Wh" + shape_to_string(wh.shape()) + " b" +
                     shape_to_string(bv.shape()));
  }
  if (!all_finite(xv)) throw NumericError("lstm: non-finite input");

  // gates holds post-activation i|f|g|o per step; cells holds c_t.
  Tensor gates({steps, 4 * h}, 0.0);
  gemm_acc(xv, wx, gates);
  Tensor cells({steps, h}, 0.0);
  Tensor out({steps, h}, 0.0);
  std::vector<double> h_prev(h, 0.0), c_prev(h, 0.0);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    auto z = gates.row(t);
    for (std::size_t j = 0; j < 4 * h; ++j) {
      double acc = z[j] + bv[j];
      for (std::size_t k = 0; k < h; ++k) acc += h_prev[k] * wh.at(k, j);
      z[j] = acc;
    }
    for (std::size_t k = 0; k < h; ++k) {
      const double i = sigmoid_scalar(z[k]);
      const double f = sigmoid_scalar(z[h + k]);
      const double gg = std::tanh(z[2 * h + k]);
      const double o = sigmoid_scalar(z[3 * h + k]);
      const double c = f * c_prev[k] + i * gg;
      z[k] = i;
      z[h + k] = f;
      z[2 * h + k] = gg;
      z[3 * h + k] = o;
      cells.at(t, k) = c;
      out.at(t, k) = o * std::tanh(c);
    }
    for (std::size_t k = 0; k < h; ++k) {
      h_prev[k] = out.at(t, k);
      c_prev[k] = cells.at(t, k);
    }
  }

  const Var parents[] = {x, w_input, w_hidden, bias};
  return x.graph().record(out, parents, [x, w_input, w_hidden, bias, gates, cells, out, reverse](Graph& g,
                                                                                                const Tensor& dy) {
    const Tensor& wh2 = w_hidden.value();
    const std::size_t steps2 = gates.rows();
    const std::size_t hh = wh2.rows();
    Tensor dz({steps2, 4 * hh}, 0.0);
    std::vector<double> dh_next(hh, 0.0), dc_next(hh, 0.0);
    Tensor* g_wh = g.grad_sink(w_hidden);
    Tensor* g_b = g.grad_sink(bias);
    for (std::size_t s = steps2; s-- > 0;) {
      const std::size_t t = reverse ? steps2 - 1 - s : s;
      const bool has_prev = s > 0;
      const std::size_t tp = reverse ? t + 1 : t - 1;
      const auto gt = gates.row(t);
      auto dzt = dz.row(t);
      for (std::size_t k = 0; k < hh; ++k) {
        const double i = gt[k], f = gt[hh + k], gg = gt[2 * hh + k], o = gt[3 * hh + k];
        const double c = cells.at(t, k);
        const double tc = std::tanh(c);
        const double c_before = has_prev ? cells.at(tp, k) : 0.0;
        const double dh = dy.at(t, k) + dh_next[k];
        const double dc = dh * o * (1.0 - tc * tc) + dc_next[k];
        dzt[k] = dc * gg * i * (1.0 - i);
        dzt[hh + k] = dc * c_before * f * (1.0 - f);
        dzt[2 * hh + k] = dc * i * (1.0 - gg * gg);
        dzt[3 * hh + k] = dh * tc * o * (1.0 - o);
        dc_next[k] = dc * f;
      }
      for (std::size_t k = 0; k < hh; ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j < 4 * hh; ++j) acc += wh2.at(k, j) * dzt[j];
        dh_next[k] = acc;
      }
      if (g_wh && has_prev) {
        for (std::size_t k = 0; k < hh; ++k) {
          const double hv = out.at(tp, k);
          if (hv == 0.0) continue;
          for (std::size_t j = 0; j < 4 * hh; ++j) g_wh->at(k, j) += hv * dzt[j];
        }
      }
      if (g_b)
        for (std::size_t j = 0; j < 4 * hh; ++j) (*g_b)[j] += dzt[j];
    }
    if (Tensor* gx = g.grad_sink(x)) gemm_nt_acc(dz, w_input.value(), *gx);
    if (Tensor* gw = g.grad_sink(w_input)) gemm_tn_acc(x.value(), dz, *gw);
  });
}

Var conv_maxpool(Var chars, std::span<const WordSpan> word_spans, Var filters, Var bias, std::size_t kernel_width) {
  const Tensor& cv = chars.value();
  const Tensor& fv = filters.value();
  const Tensor& bv = bias.value();
  const std::size_t e = cv.cols();
  const std::size_t nf = fv.cols();
  if (kernel_width == 0 || fv.rows() != kernel_width * e || bv.rows() != 1 || bv.cols() != nf) {
    throw ShapeError("conv_maxpool: filters " + shape_to_string(fv.shape()) + " incompatible with kernel " +
                     std::to_string(kernel_width) + " and char width " + std::to_string(e));
  }
  Tensor out({word_spans.size(), nf});
  // argmax[w * nf + f] = window start chosen by the pool
  std::vector<std::size_t> argmax(word_spans.size() * nf, 0);
  for (std::size_t w = 0; w < word_spans.size(); ++w) {
    const WordSpan ws = word_spans[w];
    if (ws.width < kernel_width || ws.offset + ws.width > cv.rows()) {
      throw ShapeError("conv_maxpool: word " + std::to_string(w) + " narrower than kernel or out of range");
    }
    const std::size_t windows = ws.width - kernel_width + 1;
    for (std::size_t p = 0; p < windows; ++p) {
      // window is contiguous in row-major chars: rows offset+p .. offset+p+k-1
      const double* win = cv.data() + (ws.offset + p) * e;
      for (std::size_t f = 0; f < nf; ++f) {
        double acc = bv[f];
        for (std::size_t q = 0; q < kernel_width * e; ++q) acc += win[q] * fv.at(q, f);
        if (p == 0 || acc > out.at(w, f)) {
          out.at(w, f) = acc;
          argmax[w * nf + f] = p;
        }
      }
    }
  }
  std::vector<WordSpan> spans(word_spans.begin(), word_spans.end());
  const Var parents[] = {chars, filters, bias};
  return chars.graph().record(
      std::move(out), parents, [chars, filters, bias, spans, argmax, kernel_width](Graph& g, const Tensor& dy) {
        const Tensor& cv2 = chars.value();
        const Tensor& fv2 = filters.value();
        const std::size_t e2 = cv2.cols();
        const std::size_t nf2 = fv2.cols();
        Tensor* gc = g.grad_sink(chars);
        Tensor* gf = g.grad_sink(filters);
        Tensor* gb = g.grad_sink(bias);
        for (std::size_t w = 0; w < spans.size(); ++w) {
          for (std::size_t f = 0; f < nf2; ++f) {
            const double d = dy.at(w, f);
            if (d == 0.0) continue;
            const std::size_t base = (spans[w].offset + argmax[w * nf2 + f]) * e2;
            if (gb) (*gb)[f] += d;
            for (std::size_t q = 0; q < kernel_width * e2; ++q) {
              if (gf) gf->at(q, f) += cv2[base + q] * d;
              if (gc) (*gc)[base + q] += fv2.at(q, f) * d;
            }
          }
        }
      });
}

}  // namespace granenc::ag
