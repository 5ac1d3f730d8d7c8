#include "granenc/encoder.hpp"

#include <cmath>

#include "granenc/embedding.hpp"

namespace granenc {

Lstm::Lstm(const std::string& name, std::size_t input_dim, std::size_t hidden_dim, Rng& rng)
    : w_input_(name + ".w_input", Tensor({input_dim, 4 * hidden_dim})),
      w_hidden_(name + ".w_hidden", Tensor({hidden_dim, 4 * hidden_dim})),
      bias_(name + ".bias", Tensor({1, 4 * hidden_dim})) {
  if (input_dim < 1 || hidden_dim < 1) throw ConfigError(name + ": LSTM dimensions must be positive");
  for (Parameter* p : parameters()) p->init_uniform(rng, -kRecurrentInitScale, kRecurrentInitScale);
}

ag::Var Lstm::forward(ag::Graph& g, ag::Var x, bool reverse) {
  return ag::lstm(x, g.param(w_input_), g.param(w_hidden_), g.param(bias_), reverse);
}

BiLstm::BiLstm(const std::string& name, std::size_t input_dim, std::size_t hidden_dim, Rng& rng)
    : forward_(name + ".fwd", input_dim, hidden_dim, rng), backward_(name + ".bwd", input_dim, hidden_dim, rng) {}

BiLstm::Output BiLstm::forward(ag::Graph& g, ag::Var x) {
  if (x.rows() == 0) throw ContractError("BiLSTM over an empty sequence");
  ag::Var f = forward_.forward(g, x, false);
  ag::Var b = backward_.forward(g, x, true);
  const ag::Var both[] = {f, b};
  ag::Var states = ag::concat_cols(both);
  const ag::Var ends[] = {ag::slice_rows(f, x.rows() - 1, 1), ag::slice_rows(b, 0, 1)};
  return {states, ag::concat_cols(ends)};
}

std::vector<Parameter*> BiLstm::parameters() {
  auto p = forward_.parameters();
  for (Parameter* q : backward_.parameters()) p.push_back(q);
  return p;
}

SelfAttention::SelfAttention(const std::string& name, std::size_t model_dim, std::size_t key_dim, Rng& rng)
    : w_query_(name + ".w_query", Tensor({model_dim, key_dim})),
      w_key_(name + ".w_key", Tensor({model_dim, key_dim})),
      w_value_(name + ".w_value", Tensor({model_dim, key_dim})) {
  if (model_dim < 1 || key_dim < 1) throw ConfigError(name + ": attention dimensions must be positive");
  for (Parameter* p : parameters()) p->init_uniform(rng, -kRecurrentInitScale, kRecurrentInitScale);
}

ag::Var SelfAttention::weights(ag::Graph& g, ag::Var x) {
  ag::Var q = ag::matmul(x, g.param(w_query_));
  ag::Var k = ag::matmul(x, g.param(w_key_));
  return ag::softmax_rows(ag::scale(ag::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(key_dim()))));
}

ag::Var SelfAttention::forward(ag::Graph& g, ag::Var x) {
  if (x.rows() == 0) throw ContractError("self-attention over an empty sequence");
  return ag::matmul(weights(g, x), ag::matmul(x, g.param(w_value_)));
}

SharedEncoder::SharedEncoder(std::size_t input_dim, std::size_t hidden_dim, std::size_t attn_dim, Rng& rng)
    : bilstm_("shared_encoder.bilstm", input_dim, hidden_dim, rng) {
  if (attn_dim > 0) attention_.emplace("shared_encoder.attention", input_dim, attn_dim, rng);
}

EncodedSequence SharedEncoder::forward(ag::Graph& g, ag::Var x) {
  BiLstm::Output lstm = bilstm_.forward(g, x);
  if (!attention_) return {lstm.states, lstm.summary};
  const ag::Var parts[] = {lstm.states, attention_->forward(g, x)};
  return {ag::concat_cols(parts), lstm.summary};
}

std::vector<Parameter*> SharedEncoder::parameters() {
  auto p = bilstm_.parameters();
  if (attention_)
    for (Parameter* q : attention_->parameters()) p.push_back(q);
  return p;
}

// ---------------------------------------------------------------- batched views

namespace {

void check_batch_input(const Tensor& x, const char* op) {
  if (x.rank() != 3) throw ShapeError(std::string(op) + ": expected [B, T, d], got " + shape_to_string(x.shape()));
  if (!all_finite(x)) throw NumericError(std::string(op) + ": non-finite input");
}

std::size_t checked_length(const IndexTensor& lengths, std::size_t b, std::size_t max_length) {
  const std::int64_t n = lengths[b];
  if (n < 1 || static_cast<std::size_t>(n) > max_length) {
    throw ContractError("sequence " + std::to_string(b) + " has length " + std::to_string(n) + " outside [1, " +
                        std::to_string(max_length) + "]");
  }
  return static_cast<std::size_t>(n);
}

std::vector<std::size_t> valid_positions(const IndexTensor& mask, std::size_t b) {
  std::vector<std::size_t> pos;
  for (std::size_t t = 0; t < mask.dim(1); ++t)
    if (mask.at(b, t) != 0) pos.push_back(t);
  if (pos.empty()) throw ContractError("attention mask row " + std::to_string(b) + " has no unmasked position");
  return pos;
}

// Rows of a [T, c] matrix at the given positions.
Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& rows) {
  Tensor out({rows.size(), m.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
  return out;
}

}  // namespace

IndexTensor mask_from_lengths(const IndexTensor& lengths, std::size_t max_length) {
  IndexTensor mask({lengths.size(), max_length}, 0);
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    const std::size_t n = checked_length(lengths, b, max_length);
    for (std::size_t t = 0; t < n; ++t) mask.at(b, t) = 1;
  }
  return mask;
}

BiLstmBatchOutput bilstm_encode(BiLstm& lstm, const Tensor& x, const IndexTensor& lengths) {
  check_batch_input(x, "bilstm_encode");
  const std::size_t bsz = x.dim(0), steps = x.dim(1);
  if (lengths.size() != bsz) throw ShapeError("bilstm_encode: one length per batch row required");
  BiLstmBatchOutput out{Tensor({bsz, steps, lstm.output_dim()}, 0.0), Tensor({bsz, lstm.output_dim()}, 0.0)};
  for (std::size_t b = 0; b < bsz; ++b) {
    const std::size_t n = checked_length(lengths, b, steps);
    ag::Graph g;
    BiLstm::Output r = lstm.forward(g, g.constant(read_rows(x, b, n)));
    write_rows(out.states, b, r.states.value());
    std::copy(r.summary.value().storage().begin(), r.summary.value().storage().end(), out.summary.row(b).begin());
  }
  return out;
}

Tensor attention_weights(SelfAttention& attention, const Tensor& x, const IndexTensor& mask) {
  check_batch_input(x, "attention_weights");
  const std::size_t bsz = x.dim(0), steps = x.dim(1);
  Tensor out({bsz, steps, steps}, 0.0);
  for (std::size_t b = 0; b < bsz; ++b) {
    const auto pos = valid_positions(mask, b);
    ag::Graph g;
    const Tensor xb = read_rows(x, b, steps);
    ag::Var q = ag::matmul(g.constant(gather_rows(xb, pos)), g.param(attention.w_query()));
    ag::Var k = ag::matmul(g.constant(gather_rows(xb, pos)), g.param(attention.w_key()));
    ag::Var w = ag::softmax_rows(
        ag::scale(ag::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(attention.key_dim()))));
    for (std::size_t i = 0; i < pos.size(); ++i)
      for (std::size_t j = 0; j < pos.size(); ++j) out.at(b, pos[i], pos[j]) = w.value().at(i, j);
  }
  return out;
}

Tensor self_attend(SelfAttention& attention, const Tensor& x, const IndexTensor& mask) {
  check_batch_input(x, "self_attend");
  const std::size_t bsz = x.dim(0), steps = x.dim(1);
  if (mask.rank() != 2 || mask.dim(0) != bsz || mask.dim(1) != steps) throw ShapeError("self_attend: mask shape");
  Tensor out({bsz, steps, attention.key_dim()}, 0.0);
  for (std::size_t b = 0; b < bsz; ++b) {
    const auto pos = valid_positions(mask, b);
    ag::Graph g;
    ag::Var xv = g.constant(gather_rows(read_rows(x, b, steps), pos));
    const Tensor& c = attention.forward(g, xv).value();
    for (std::size_t i = 0; i < pos.size(); ++i)
      for (std::size_t j = 0; j < c.cols(); ++j) out.at(b, pos[i], j) = c.at(i, j);
  }
  return out;
}

EncoderOutput encode(SharedEncoder& encoder, const Tensor& x, const IndexTensor& lengths, const IndexTensor& mask) {
  check_batch_input(x, "encode");
  const std::size_t bsz = x.dim(0), steps = x.dim(1);
  if (mask.rank() != 2 || mask.dim(0) != bsz || mask.dim(1) != steps) throw ShapeError("encode: mask shape");
  if (lengths.size() != bsz) throw ShapeError("encode: one length per batch row required");
  if (mask_from_lengths(lengths, steps) != mask) throw ContractError("encode: mask disagrees with lengths");
  EncoderOutput out{Tensor({bsz, steps, encoder.output_dim()}, 0.0), Tensor({bsz, 2 * encoder.hidden_dim()}, 0.0),
                    mask};
  for (std::size_t b = 0; b < bsz; ++b) {
    const std::size_t n = checked_length(lengths, b, steps);
    ag::Graph g;
    EncodedSequence r = encoder.forward(g, g.constant(read_rows(x, b, n)));
    write_rows(out.token_states, b, r.token_states.value());
    std::copy(r.summary.value().storage().begin(), r.summary.value().storage().end(), out.summary.row(b).begin());
  }
  return out;
}

}  // namespace granenc
