#pragma once

#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "granenc/datasets.hpp"
#include "granenc/encoder.hpp"

namespace granenc {

enum class InjectScope { none, question, both };
std::string_view to_string(InjectScope scope);
InjectScope parse_inject_scope(std::string_view text);

// Concatenates shared-encoder token states onto the MRC embeddings. With a
// null encoder the embeddings pass through unchanged. `zeros_only` keeps the
// width but feeds zeros (the non-injected side of inject_scope=question).
ag::Var inject(ag::Graph& g, ag::Var embeddings, SharedEncoder* encoder, bool detach, bool zeros_only = false);
// Batched: [B, T, d_in] -> [B, T, d_in + d_slu]; zero past each length.
Tensor inject(const Tensor& mrc_embeddings, SharedEncoder* encoder, const IndexTensor& lengths);

// Bidirectional attention flow between passage states H [Tp, d] and
// question states U [Tq, d] with similarity weights w_sim [1, 3d].
// Output G [Tp, 4d] = [h; c~; h*c~; h*q~].
ag::Var attention_flow(ag::Var passage, ag::Var question, ag::Var w_sim);

class AttentionFlow {
 public:
  AttentionFlow(std::size_t dim, Rng& rng);
  std::size_t dim() const { return w_sim_.value.cols() / 3; }
  ag::Var forward(ag::Graph& g, ag::Var passage, ag::Var question) {
    return attention_flow(passage, question, g.param(w_sim_));
  }
  Parameter& w_sim() { return w_sim_; }
  std::vector<Parameter*> parameters() { return {&w_sim_}; }

 private:
  Parameter w_sim_;
};

struct SpanLogits {
  ag::Var start;  // [1, 1 + Tp], index 0 is the virtual null position
  ag::Var end;
};

// Start logits from [G; M]; end logits from [G; M2] with M2 a BiLSTM over
// [G; M]. A learned scalar bias is prepended as the null logit.
class SpanOutput {
 public:
  SpanOutput(std::size_t flow_dim, std::size_t model_dim, std::size_t hidden_dim, Rng& rng);

  SpanLogits forward(ag::Graph& g, ag::Var flow, ag::Var modeling);
  Parameter& null_bias() { return null_bias_; }
  std::vector<Parameter*> parameters();

 private:
  BiLstm end_lstm_;
  Parameter w_start_;
  Parameter w_end_;
  Parameter null_bias_;
};

// BiDAF-style reader over injected passage/question representations.
class MrcHead {
 public:
  MrcHead(std::size_t input_dim, std::size_t hidden_dim, Rng& rng);

  std::size_t input_dim() const { return contextual_.input_dim(); }
  SpanLogits forward(ag::Graph& g, ag::Var passage_repr, ag::Var question_repr);

  std::vector<Parameter*> parameters();

 private:
  BiLstm contextual_;
  AttentionFlow flow_;
  BiLstm modeling_;
  SpanOutput span_;
};

// Span in virtual-null coordinates: (0, 0) is "no answer", passage token t
// is position t + 1.
struct SpanPrediction {
  std::string qid;
  std::size_t start = 0;
  std::size_t end = 0;
  bool is_null = true;
  double score = 0.0;
  double null_score = 0.0;
};

// Best pair (s, e) with 1 <= s <= e < s + max_answer_len over logits of
// length 1 + Tp; null wins when its score exceeds best + null_threshold.
// Ties prefer the smaller start, then the smaller end.
SpanPrediction decode_answer(std::span<const double> start_logits, std::span<const double> end_logits,
                             std::size_t max_answer_len, double null_threshold = 0.0);

// Mean over the batch of -(log p_start[s*] + log p_end[e*]).
double mrc_loss(const std::vector<std::vector<double>>& start_logits,
                const std::vector<std::vector<double>>& end_logits, const MRCBatch& batch);
ag::Var mrc_loss(const std::vector<SpanLogits>& logits, const MRCBatch& batch);

// Answer string for a decoded span; empty for null.
std::string render_answer(const MRCExample& example, const SpanPrediction& prediction);

// qid -> answer JSON object, keys sorted, UTF-8.
void write_predictions_json(std::ostream& out, const std::map<std::string, std::string>& predictions);

}  // namespace granenc
