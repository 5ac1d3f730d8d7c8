#include "granenc/slu_head.hpp"

#include <cmath>
#include <map>

#include "granenc/embedding.hpp"

namespace granenc {

IntentDecoder::IntentDecoder(std::size_t encoder_dim, std::size_t hidden_dim, std::size_t num_intents, Rng& rng)
    : lstm_("slu_decoders.intent.lstm", encoder_dim, hidden_dim, rng),
      proj_w_("slu_decoders.intent.proj_w", Tensor({hidden_dim, num_intents})),
      proj_b_("slu_decoders.intent.proj_b", Tensor({1, num_intents})) {
  if (num_intents < 1) throw ConfigError("intent decoder needs at least one intent");
  proj_w_.init_uniform(rng, -kRecurrentInitScale, kRecurrentInitScale);
  proj_b_.init_uniform(rng, -kRecurrentInitScale, kRecurrentInitScale);
}

ag::Var IntentDecoder::forward(ag::Graph& g, ag::Var encoder_states) {
  if (encoder_states.cols() != input_dim()) {
    throw ShapeError("intent decoder expects width " + std::to_string(input_dim()) + ", got " +
                     std::to_string(encoder_states.cols()));
  }
  ag::Var h = lstm_.forward(g, encoder_states);
  return ag::add_row(ag::matmul(h, g.param(proj_w_)), g.param(proj_b_));
}

std::vector<Parameter*> IntentDecoder::parameters() {
  auto p = lstm_.parameters();
  p.push_back(&proj_w_);
  p.push_back(&proj_b_);
  return p;
}

SlotDecoder::SlotDecoder(std::size_t encoder_dim, std::size_t num_intents, std::size_t hidden_dim,
                         std::size_t num_slots, Rng& rng)
    : lstm_("slu_decoders.slot.lstm", encoder_dim + num_intents, hidden_dim, rng),
      proj_w_("slu_decoders.slot.proj_w", Tensor({hidden_dim, num_slots})),
      proj_b_("slu_decoders.slot.proj_b", Tensor({1, num_slots})) {
  if (num_slots < 1) throw ConfigError("slot decoder needs at least one tag");
  proj_w_.init_uniform(rng, -kRecurrentInitScale, kRecurrentInitScale);
  proj_b_.init_uniform(rng, -kRecurrentInitScale, kRecurrentInitScale);
}

ag::Var SlotDecoder::forward(ag::Graph& g, ag::Var encoder_states, ag::Var intent_dists) {
  if (encoder_states.rows() != intent_dists.rows() ||
      encoder_states.cols() + intent_dists.cols() != input_dim()) {
    throw ShapeError("slot decoder expects width " + std::to_string(input_dim()) + ", got " +
                     std::to_string(encoder_states.cols()) + " + " + std::to_string(intent_dists.cols()));
  }
  const ag::Var parts[] = {encoder_states, intent_dists};
  ag::Var h = lstm_.forward(g, ag::concat_cols(parts));
  return ag::add_row(ag::matmul(h, g.param(proj_w_)), g.param(proj_b_));
}

std::vector<Parameter*> SlotDecoder::parameters() {
  auto p = lstm_.parameters();
  p.push_back(&proj_w_);
  p.push_back(&proj_b_);
  return p;
}

SluHead::SluHead(std::size_t encoder_dim, std::size_t hidden_dim, std::size_t num_intents, std::size_t num_slots,
                 Rng& rng)
    : intent_(encoder_dim, hidden_dim, num_intents, rng), slot_(encoder_dim, num_intents, hidden_dim, num_slots, rng) {}

SluOutputs SluHead::forward(ag::Graph& g, ag::Var encoder_states) {
  ag::Var logits = intent_.forward(g, encoder_states);
  ag::Var dists = ag::softmax_rows(logits);
  return {logits, dists, slot_.forward(g, encoder_states, dists)};
}

std::vector<Parameter*> SluHead::parameters() {
  auto p = intent_.parameters();
  for (Parameter* q : slot_.parameters()) p.push_back(q);
  return p;
}

std::int64_t vote_intent(const Tensor& token_logits) {
  const std::size_t steps = token_logits.rows(), k = token_logits.cols();
  if (steps == 0 || k == 0) throw ShapeError("vote_intent: empty logits");
  std::vector<std::size_t> votes(k, 0);
  std::vector<double> mean(k, 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    const auto row = token_logits.row(t);
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (row[j] > row[best]) best = j;
    const double m = row[best];
    ++votes[best];
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - m);
    for (std::size_t j = 0; j < k; ++j) mean[j] += std::exp(row[j] - m) / z / static_cast<double>(steps);
  }
  const std::size_t top = *std::max_element(votes.begin(), votes.end());
  std::int64_t winner = -1;
  for (std::size_t j = 0; j < k; ++j) {
    if (votes[j] != top) continue;
    if (winner < 0 || mean[j] > mean[static_cast<std::size_t>(winner)]) winner = static_cast<std::int64_t>(j);
  }
  return winner;
}

std::vector<std::string> repair_bio(std::vector<std::string> tags) {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string_view type = tag_type(tags[i]);
    if (tags[i][0] != 'I' || type.empty()) continue;
    if (i == 0 || tag_type(tags[i - 1]) != type) tags[i] = "B-" + std::string(type);
  }
  return tags;
}

// ---------------------------------------------------------------- batched views

namespace {

std::size_t row_length(const EncoderOutput& enc, std::size_t b) {
  std::size_t n = 0;
  while (n < enc.mask.dim(1) && enc.mask.at(b, n) != 0) ++n;
  if (n == 0) throw ContractError("encoder output row " + std::to_string(b) + " is fully masked");
  return n;
}

}  // namespace

IntentDecoding decode_intent(IntentDecoder& decoder, const EncoderOutput& enc) {
  const std::size_t bsz = enc.token_states.dim(0), steps = enc.token_states.dim(1);
  IntentDecoding out{Tensor({bsz, steps, decoder.num_intents()}, 0.0), {}};
  for (std::size_t b = 0; b < bsz; ++b) {
    const std::size_t n = row_length(enc, b);
    ag::Graph g;
    ag::Var logits = decoder.forward(g, g.constant(read_rows(enc.token_states, b, n)));
    write_rows(out.token_logits, b, logits.value());
    out.sentence_intent.push_back(vote_intent(logits.value()));
  }
  return out;
}

Tensor decode_slots(SlotDecoder& decoder, const EncoderOutput& enc, const Tensor& intent_token_dists) {
  const std::size_t bsz = enc.token_states.dim(0), steps = enc.token_states.dim(1);
  if (intent_token_dists.rank() != 3 || intent_token_dists.dim(0) != bsz || intent_token_dists.dim(1) != steps) {
    throw ShapeError("decode_slots: intent distributions " + shape_to_string(intent_token_dists.shape()) +
                     " do not match encoder output");
  }
  Tensor out({bsz, steps, decoder.num_slots()}, 0.0);
  for (std::size_t b = 0; b < bsz; ++b) {
    const std::size_t n = row_length(enc, b);
    const Tensor dists = read_rows(intent_token_dists, b, n);
    for (std::size_t t = 0; t < n; ++t) {
      double s = 0.0;
      for (double v : dists.row(t)) s += v;
      if (std::abs(s - 1.0) > 1e-6) {
        throw ContractError("decode_slots: intent distribution at (" + std::to_string(b) + ", " + std::to_string(t) +
                            ") sums to " + std::to_string(s));
      }
    }
    ag::Graph g;
    ag::Var logits = decoder.forward(g, g.constant(read_rows(enc.token_states, b, n)), g.constant(dists));
    write_rows(out, b, logits.value());
  }
  return out;
}

Tensor masked_softmax(const Tensor& logits, const IndexTensor& mask) {
  Tensor out(logits.shape(), 0.0);
  const std::size_t bsz = logits.dim(0), steps = logits.dim(1), k = logits.dim(2);
  for (std::size_t b = 0; b < bsz; ++b) {
    for (std::size_t t = 0; t < steps; ++t) {
      if (mask.at(b, t) == 0) continue;
      double m = logits.at(b, t, 0);
      for (std::size_t j = 1; j < k; ++j) m = std::max(m, logits.at(b, t, j));
      double z = 0.0;
      for (std::size_t j = 0; j < k; ++j) z += std::exp(logits.at(b, t, j) - m);
      for (std::size_t j = 0; j < k; ++j) out.at(b, t, j) = std::exp(logits.at(b, t, j) - m) / z;
    }
  }
  return out;
}

namespace {

double nll(const Tensor& logits, std::size_t b, std::size_t t, std::int64_t target) {
  const std::size_t k = logits.dim(2);
  if (target < 0 || static_cast<std::size_t>(target) >= k) {
    throw LabelError("target id " + std::to_string(target) + " outside label space of size " + std::to_string(k));
  }
  double m = logits.at(b, t, 0);
  for (std::size_t j = 1; j < k; ++j) m = std::max(m, logits.at(b, t, j));
  double z = 0.0;
  for (std::size_t j = 0; j < k; ++j) z += std::exp(logits.at(b, t, j) - m);
  return m + std::log(z) - logits.at(b, t, static_cast<std::size_t>(target));
}

}  // namespace

SluLoss slu_loss(const Tensor& token_logits, const Tensor& slot_logits, const SLUBatch& batch) {
  const SequenceBatch& seq = batch.utterance;
  double intent = 0.0, slot = 0.0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < seq.batch_size(); ++b) {
    for (std::size_t t = 0; t < seq.max_length(); ++t) {
      if (seq.mask.at(b, t) == 0) continue;
      intent += nll(token_logits, b, t, batch.intent[b]);
      slot += nll(slot_logits, b, t, batch.slots.at(b, t));
      ++count;
    }
  }
  if (count == 0) throw ContractError("slu_loss: batch has no unmasked tokens");
  return {intent / static_cast<double>(count), slot / static_cast<double>(count)};
}

SluLossVars slu_loss(const std::vector<SluOutputs>& outputs, const SLUBatch& batch) {
  const SequenceBatch& seq = batch.utterance;
  if (outputs.size() != seq.batch_size()) throw ShapeError("slu_loss: one output per batch row required");
  std::vector<ag::Var> intent_terms, slot_terms;
  std::size_t count = 0;
  for (std::size_t b = 0; b < outputs.size(); ++b) {
    const std::size_t n = seq.length(b);
    std::vector<std::int64_t> intent_targets(n, batch.intent[b]);
    std::vector<std::int64_t> slot_targets(n);
    for (std::size_t t = 0; t < n; ++t) slot_targets[t] = batch.slots.at(b, t);
    intent_terms.push_back(ag::cross_entropy_sum(outputs[b].intent_logits, intent_targets));
    slot_terms.push_back(ag::cross_entropy_sum(outputs[b].slot_logits, slot_targets));
    count += n;
  }
  if (count == 0) throw ContractError("slu_loss: batch has no unmasked tokens");
  const double inv = 1.0 / static_cast<double>(count);
  return {ag::scale(ag::sum(ag::concat_rows(intent_terms)), inv), ag::scale(ag::sum(ag::concat_rows(slot_terms)), inv)};
}

void write_slu_predictions(std::ostream& out, const std::vector<SluPrediction>& predictions) {
  for (const SluPrediction& p : predictions) {
    out << p.intent << '\t';
    for (std::size_t i = 0; i < p.slots.size(); ++i) {
      if (i) out << ' ';
      out << p.slots[i];
    }
    out << '\n';
  }
}

}  // namespace granenc
