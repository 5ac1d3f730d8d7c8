#include "granenc/mrc_head.hpp"

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "granenc/embedding.hpp"

namespace granenc {

std::string_view to_string(InjectScope scope) {
  switch (scope) {
    case InjectScope::none:
      return "none";
    case InjectScope::question:
      return "question";
    case InjectScope::both:
      return "both";
  }
  return "none";
}

InjectScope parse_inject_scope(std::string_view text) {
  if (text == "none") return InjectScope::none;
  if (text == "question") return InjectScope::question;
  if (text == "both") return InjectScope::both;
  throw ConfigError("inject_scope must be none, question or both, got \"" + std::string(text) + "\"");
}

ag::Var inject(ag::Graph& g, ag::Var embeddings, SharedEncoder* encoder, bool detach, bool zeros_only) {
  if (!encoder) return embeddings;
  if (embeddings.cols() != encoder->input_dim()) {
    throw IntegrationError("shared encoder expects width " + std::to_string(encoder->input_dim()) + ", got " +
                           std::to_string(embeddings.cols()));
  }
  ag::Var states = zeros_only ? g.constant(Tensor({embeddings.rows(), encoder->output_dim()}, 0.0))
                              : encoder->forward(g, embeddings).token_states;
  if (states.rows() != embeddings.rows()) throw IntegrationError("injected states do not match sequence length");
  if (detach) states = ag::detach(states);
  const ag::Var parts[] = {embeddings, states};
  return ag::concat_cols(parts);
}

Tensor inject(const Tensor& mrc_embeddings, SharedEncoder* encoder, const IndexTensor& lengths) {
  if (mrc_embeddings.rank() != 3) throw ShapeError("inject: expected [B, T, d_in]");
  if (!encoder) return mrc_embeddings;
  const std::size_t bsz = mrc_embeddings.dim(0), steps = mrc_embeddings.dim(1);
  if (lengths.size() != bsz) throw IntegrationError("inject: one length per batch row required");
  Tensor out({bsz, steps, mrc_embeddings.dim(2) + encoder->output_dim()}, 0.0);
  for (std::size_t b = 0; b < bsz; ++b) {
    const auto n = static_cast<std::size_t>(lengths[b]);
    if (n < 1 || n > steps) throw IntegrationError("inject: length outside the padded sequence");
    ag::Graph g;
    write_rows(out, b, inject(g, g.constant(read_rows(mrc_embeddings, b, n)), encoder, false).value());
  }
  return out;
}

ag::Var attention_flow(ag::Var passage, ag::Var question, ag::Var w_sim) {
  const std::size_t d = passage.cols();
  if (question.cols() != d) throw ShapeError("attention_flow: passage and question widths differ");
  if (w_sim.rows() != 1 || w_sim.cols() != 3 * d) throw ShapeError("attention_flow: w_sim must be [1, 3d]");
  const std::size_t tp = passage.rows();
  ag::Var w_h = ag::slice_cols(w_sim, 0, d);
  ag::Var w_u = ag::slice_cols(w_sim, d, d);
  ag::Var w_hu = ag::slice_cols(w_sim, 2 * d, d);
  // S[t, j] = w_h.h_t + w_u.u_j + w_hu.(h_t * u_j)
  ag::Var sim = ag::matmul_nt(ag::mul_row(passage, w_hu), question);
  sim = ag::add_col(sim, ag::matmul_nt(passage, w_h));
  sim = ag::add_row(sim, ag::matmul_nt(w_u, question));
  ag::Var c2q = ag::matmul(ag::softmax_rows(sim), question);
  ag::Var q2c_weights = ag::softmax_rows(ag::transpose(ag::max_cols(sim)));
  ag::Var q2c = ag::broadcast_rows(ag::matmul(q2c_weights, passage), tp);
  const ag::Var parts[] = {passage, c2q, ag::mul(passage, c2q), ag::mul(passage, q2c)};
  return ag::concat_cols(parts);
}

AttentionFlow::AttentionFlow(std::size_t dim, Rng& rng) : w_sim_("mrc_head.flow.w_sim", Tensor({1, 3 * dim})) {
  w_sim_.init_uniform(rng, -kRecurrentInitScale, kRecurrentInitScale);
}

SpanOutput::SpanOutput(std::size_t flow_dim, std::size_t model_dim, std::size_t hidden_dim, Rng& rng)
    : end_lstm_("mrc_head.span.end_lstm", flow_dim + model_dim, hidden_dim, rng),
      w_start_("mrc_head.span.w_start", Tensor({flow_dim + model_dim, 1})),
      w_end_("mrc_head.span.w_end", Tensor({flow_dim + 2 * hidden_dim, 1})),
      null_bias_("mrc_head.span.null_bias", Tensor({1, 1})) {
  w_start_.init_uniform(rng, -kRecurrentInitScale, kRecurrentInitScale);
  w_end_.init_uniform(rng, -kRecurrentInitScale, kRecurrentInitScale);
}

SpanLogits SpanOutput::forward(ag::Graph& g, ag::Var flow, ag::Var modeling) {
  const ag::Var gm[] = {flow, modeling};
  ag::Var start_in = ag::concat_cols(gm);
  ag::Var m2 = end_lstm_.forward(g, start_in).states;
  const ag::Var gm2[] = {flow, m2};
  ag::Var end_in = ag::concat_cols(gm2);
  ag::Var null = g.param(null_bias_);
  const ag::Var start[] = {null, ag::transpose(ag::matmul(start_in, g.param(w_start_)))};
  const ag::Var end[] = {null, ag::transpose(ag::matmul(end_in, g.param(w_end_)))};
  return {ag::concat_cols(start), ag::concat_cols(end)};
}

std::vector<Parameter*> SpanOutput::parameters() {
  auto p = end_lstm_.parameters();
  p.push_back(&w_start_);
  p.push_back(&w_end_);
  p.push_back(&null_bias_);
  return p;
}

MrcHead::MrcHead(std::size_t input_dim, std::size_t hidden_dim, Rng& rng)
    : contextual_("mrc_head.contextual", input_dim, hidden_dim, rng),
      flow_(2 * hidden_dim, rng),
      modeling_("mrc_head.modeling", 8 * hidden_dim, hidden_dim, rng),
      span_(8 * hidden_dim, 2 * hidden_dim, hidden_dim, rng) {}

SpanLogits MrcHead::forward(ag::Graph& g, ag::Var passage_repr, ag::Var question_repr) {
  if (passage_repr.cols() != input_dim() || question_repr.cols() != input_dim()) {
    throw IntegrationError("MRC head expects width " + std::to_string(input_dim()));
  }
  ag::Var h = contextual_.forward(g, passage_repr).states;
  ag::Var u = contextual_.forward(g, question_repr).states;
  ag::Var flow = flow_.forward(g, h, u);
  ag::Var m = modeling_.forward(g, flow).states;
  return span_.forward(g, flow, m);
}

std::vector<Parameter*> MrcHead::parameters() {
  auto p = contextual_.parameters();
  for (Parameter* q : flow_.parameters()) p.push_back(q);
  for (Parameter* q : modeling_.parameters()) p.push_back(q);
  for (Parameter* q : span_.parameters()) p.push_back(q);
  return p;
}

SpanPrediction decode_answer(std::span<const double> start_logits, std::span<const double> end_logits,
                             std::size_t max_answer_len, double null_threshold) {
  if (max_answer_len < 1) throw ContractError("decode_answer: max_answer_len must be at least 1");
  if (start_logits.size() != end_logits.size()) throw ShapeError("decode_answer: start/end lengths differ");
  if (start_logits.size() < 2) throw ContractError("decode_answer: passage has no tokens");
  const std::size_t n = start_logits.size();
  SpanPrediction best;
  best.score = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 1; s < n; ++s) {
    const std::size_t last = std::min(n - 1, s + max_answer_len - 1);
    for (std::size_t e = s; e <= last; ++e) {
      const double score = start_logits[s] + end_logits[e];
      if (score > best.score) {
        best.score = score;
        best.start = s;
        best.end = e;
      }
    }
  }
  best.null_score = start_logits[0] + end_logits[0];
  best.is_null = best.null_score > best.score + null_threshold;
  if (best.is_null) best.start = best.end = 0;
  return best;
}

namespace {

double log_softmax_at(std::span<const double> logits, std::int64_t target) {
  if (target < 0 || static_cast<std::size_t>(target) >= logits.size()) {
    throw LabelError("span target " + std::to_string(target) + " outside " + std::to_string(logits.size()) +
                     " positions");
  }
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  return logits[static_cast<std::size_t>(target)] - m - std::log(z);
}

}  // namespace

double mrc_loss(const std::vector<std::vector<double>>& start_logits, const std::vector<std::vector<double>>& end_logits,
                const MRCBatch& batch) {
  const std::size_t bsz = batch.span_start.size();
  if (start_logits.size() != bsz || end_logits.size() != bsz) throw ShapeError("mrc_loss: one row per example required");
  if (bsz == 0) throw ContractError("mrc_loss: empty batch");
  double total = 0.0;
  for (std::size_t b = 0; b < bsz; ++b) {
    total -= log_softmax_at(start_logits[b], batch.span_start[b]) + log_softmax_at(end_logits[b], batch.span_end[b]);
  }
  return total / static_cast<double>(bsz);
}

ag::Var mrc_loss(const std::vector<SpanLogits>& logits, const MRCBatch& batch) {
  const std::size_t bsz = batch.span_start.size();
  if (logits.size() != bsz) throw ShapeError("mrc_loss: one output per example required");
  if (bsz == 0) throw ContractError("mrc_loss: empty batch");
  std::vector<ag::Var> terms;
  for (std::size_t b = 0; b < bsz; ++b) {
    const std::int64_t s[] = {batch.span_start[b]};
    const std::int64_t e[] = {batch.span_end[b]};
    const ag::Var pair[] = {ag::cross_entropy_sum(logits[b].start, s), ag::cross_entropy_sum(logits[b].end, e)};
    terms.push_back(ag::concat_rows(pair));
  }
  return ag::scale(ag::sum(ag::concat_rows(terms)), 1.0 / static_cast<double>(bsz));
}

std::string render_answer(const MRCExample& example, const SpanPrediction& prediction) {
  if (prediction.is_null) return std::string();
  if (prediction.start < 1 || prediction.end < prediction.start || prediction.end > example.passage_spans.size()) {
    throw ContractError("span (" + std::to_string(prediction.start) + ", " + std::to_string(prediction.end) +
                        ") outside passage of " + std::to_string(example.passage_spans.size()) + " tokens");
  }
  return passage_text(example, prediction.start - 1, prediction.end - 1);
}

void write_predictions_json(std::ostream& out, const std::map<std::string, std::string>& predictions) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [qid, answer] : predictions) j[qid] = answer;
  out << j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
}

}  // namespace granenc
