#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "granenc/parameter.hpp"
#include "granenc/tensor.hpp"

// Reverse-mode automatic differentiation over rank-2 tensors.
//
// A Graph is built eagerly, one operation at a time; every op computes its
// value immediately and records a closure that propagates the output
// gradient to its inputs. Graphs are cheap and meant to be discarded after a
// single forward/backward pass.
namespace granenc::ag {

class Graph;

class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf without gradient.
  Var constant(Tensor value);
  // Leaf that accumulates a gradient readable through grad().
  Var input(Tensor value);
  // Leaf bound to a parameter; gradients accumulate straight into p.grad.
  // Repeated calls with the same parameter return the same node.
  Var param(Parameter& p);

  Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);

  void backward(Var scalar_root);

  const Tensor& value(Var v) const { return *nodes_[v.id_].value; }
  // Gradient of an input() leaf after backward(); zero tensor if unreached.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }

  // Returns the gradient buffer of v, allocating zeros on first use, or
  // nullptr when v does not require a gradient.
  Tensor* grad_sink(Var v);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor storage;
    const Tensor* value = nullptr;
    Tensor grad_storage;
    Tensor* grad = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

inline const Tensor& Var::value() const { return graph_->value(*this); }

// ---- elementwise and linear algebra ----
Var matmul(Var a, Var b);     // [r,k]x[k,c]
Var matmul_nt(Var a, Var b);  // a * b^T
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_row(Var a, Var row);   // broadcast [1,c] over rows
Var add_col(Var a, Var col);   // broadcast [r,1] over columns
Var mul_row(Var a, Var row);   // broadcast hadamard with [1,c]
Var broadcast_rows(Var row, std::size_t rows);
Var tanh(Var a);
Var sigmoid(Var a);

// ---- structure ----
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t offset, std::size_t length);
Var slice_rows(Var a, std::size_t offset, std::size_t length);
Var detach(Var a);

// ---- reductions and normalisers ----
Var sum(Var a);        // [1,1]
Var max_cols(Var a);   // [r,1], max over each row
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
// Sum over rows of -log softmax(a[r])[targets[r]] as a [1,1] scalar.
Var cross_entropy_sum(Var logits, std::span<const std::int64_t> targets);

// ---- fused layers ----
// Rows of the table selected by ids -> [n, d]. Gradient scatters into the
// parameter directly, skipping its frozen row.
Var lookup(Graph& g, Parameter& table, std::span<const std::int64_t> ids);

// Unidirectional LSTM over the rows of x. Gate column order i|f|g|o.
// x: [T,d], w_input: [d,4h], w_hidden: [h,4h], bias: [1,4h] -> [T,h].
// With reverse=true the recurrence runs from row T-1 down to row 0 and the
// output row t still corresponds to input row t.
Var lstm(Var x, Var w_input, Var w_hidden, Var bias, bool reverse);

// Character convolution with max-over-time pooling, one output row per word.
// chars: [N,e] character embeddings of all words laid out back to back;
// word_spans[w] = (offset, width) into chars with width >= kernel_width.
// filters: [kernel_width*e, F], bias: [1,F]  -> [words, F].
struct WordSpan {
  std::size_t offset;
  std::size_t width;
};
Var conv_maxpool(Var chars, std::span<const WordSpan> word_spans, Var filters, Var bias,
                 std::size_t kernel_width);

}  // namespace granenc::ag
