#pragma once

#include <optional>
#include <string>
#include <vector>

#include "granenc/autograd.hpp"

namespace granenc {

inline constexpr double kRecurrentInitScale = 0.08;

// Single-direction LSTM layer; gate layout i|f|g|o.
class Lstm {
 public:
  Lstm(const std::string& name, std::size_t input_dim, std::size_t hidden_dim, Rng& rng);

  std::size_t input_dim() const { return w_input_.value.rows(); }
  std::size_t hidden_dim() const { return w_hidden_.value.rows(); }

  ag::Var forward(ag::Graph& g, ag::Var x, bool reverse = false);
  std::vector<Parameter*> parameters() { return {&w_input_, &w_hidden_, &bias_}; }

 private:
  Parameter w_input_;
  Parameter w_hidden_;
  Parameter bias_;
};

class BiLstm {
 public:
  BiLstm(const std::string& name, std::size_t input_dim, std::size_t hidden_dim, Rng& rng);

  struct Output {
    ag::Var states;   // [T, 2h], row t = forward h_t (+) backward h_t
    ag::Var summary;  // [1, 2h], forward final state (+) backward first-position state
  };

  std::size_t input_dim() const { return forward_.input_dim(); }
  std::size_t hidden_dim() const { return forward_.hidden_dim(); }
  std::size_t output_dim() const { return 2 * hidden_dim(); }

  Output forward(ag::Graph& g, ag::Var x);
  std::vector<Parameter*> parameters();

 private:
  Lstm forward_;
  Lstm backward_;
};

// Single-head scaled dot-product self-attention without biases.
class SelfAttention {
 public:
  SelfAttention(const std::string& name, std::size_t model_dim, std::size_t key_dim, Rng& rng);

  std::size_t model_dim() const { return w_query_.value.rows(); }
  std::size_t key_dim() const { return w_query_.value.cols(); }

  // All rows of x attend to all rows of x.
  ag::Var forward(ag::Graph& g, ag::Var x);
  // Attention weights of the unmasked keys for every query, [T, T_valid].
  ag::Var weights(ag::Graph& g, ag::Var x);

  std::vector<Parameter*> parameters() { return {&w_query_, &w_key_, &w_value_}; }
  Parameter& w_query() { return w_query_; }
  Parameter& w_key() { return w_key_; }
  Parameter& w_value() { return w_value_; }

 private:
  Parameter w_query_;
  Parameter w_key_;
  Parameter w_value_;
};

// Per-example encoder result inside a graph.
struct EncodedSequence {
  ag::Var token_states;  // [T, 2h + d_attn]
  ag::Var summary;       // [1, 2h]
};

// The shared encoder: BiLSTM and self-attention run in parallel over the same
// input and are concatenated per token.
class SharedEncoder {
 public:
  SharedEncoder(std::size_t input_dim, std::size_t hidden_dim, std::size_t attn_dim, Rng& rng);

  std::size_t input_dim() const { return bilstm_.input_dim(); }
  std::size_t hidden_dim() const { return bilstm_.hidden_dim(); }
  std::size_t attn_dim() const { return attention_ ? attention_->key_dim() : 0; }
  std::size_t output_dim() const { return bilstm_.output_dim() + attn_dim(); }

  EncodedSequence forward(ag::Graph& g, ag::Var x);

  BiLstm& bilstm() { return bilstm_; }
  SelfAttention* attention() { return attention_ ? &*attention_ : nullptr; }
  std::vector<Parameter*> parameters();

 private:
  BiLstm bilstm_;
  std::optional<SelfAttention> attention_;
};

// ---- batched, forward-only views over [B, T, d] tensors ----

struct EncoderOutput {
  Tensor token_states;  // [B, T, 2h + d_attn], zero past each length
  Tensor summary;       // [B, 2h]
  IndexTensor mask;     // [B, T]
};

IndexTensor mask_from_lengths(const IndexTensor& lengths, std::size_t max_length);

struct BiLstmBatchOutput {
  Tensor states;   // [B, T, 2h]
  Tensor summary;  // [B, 2h]
};
BiLstmBatchOutput bilstm_encode(BiLstm& lstm, const Tensor& x, const IndexTensor& lengths);

// Masked keys get -inf logits; masked query rows are zero in the output.
Tensor self_attend(SelfAttention& attention, const Tensor& x, const IndexTensor& mask);
// Full [B, T, T] attention matrices (zero rows for masked queries).
Tensor attention_weights(SelfAttention& attention, const Tensor& x, const IndexTensor& mask);

EncoderOutput encode(SharedEncoder& encoder, const Tensor& x, const IndexTensor& lengths, const IndexTensor& mask);

}  // namespace granenc
