#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "granenc/datasets.hpp"
#include "granenc/encoder.hpp"

namespace granenc {

// Token-level intent decoder: LSTM over encoder states, then a projection to
// intent logits at every position.
class IntentDecoder {
 public:
  IntentDecoder(std::size_t encoder_dim, std::size_t hidden_dim, std::size_t num_intents, Rng& rng);

  std::size_t input_dim() const { return lstm_.input_dim(); }
  std::size_t num_intents() const { return proj_w_.value.cols(); }

  ag::Var forward(ag::Graph& g, ag::Var encoder_states);  // [T, |I|]
  std::vector<Parameter*> parameters();

 private:
  Lstm lstm_;
  Parameter proj_w_;
  Parameter proj_b_;
};

// Slot decoder fed with encoder states and the intent distribution of the
// same position.
class SlotDecoder {
 public:
  SlotDecoder(std::size_t encoder_dim, std::size_t num_intents, std::size_t hidden_dim, std::size_t num_slots,
              Rng& rng);

  std::size_t input_dim() const { return lstm_.input_dim(); }
  std::size_t num_slots() const { return proj_w_.value.cols(); }

  ag::Var forward(ag::Graph& g, ag::Var encoder_states, ag::Var intent_dists);  // [T, |S|]
  std::vector<Parameter*> parameters();

 private:
  Lstm lstm_;
  Parameter proj_w_;
  Parameter proj_b_;
};

struct SluOutputs {
  ag::Var intent_logits;  // [T, |I|]
  ag::Var intent_dists;   // softmax of intent_logits
  ag::Var slot_logits;    // [T, |S|]
};

class SluHead {
 public:
  SluHead(std::size_t encoder_dim, std::size_t hidden_dim, std::size_t num_intents, std::size_t num_slots, Rng& rng);

  SluOutputs forward(ag::Graph& g, ag::Var encoder_states);

  IntentDecoder& intent() { return intent_; }
  SlotDecoder& slot() { return slot_; }
  std::vector<Parameter*> parameters();

 private:
  IntentDecoder intent_;
  SlotDecoder slot_;
};

// Majority vote over per-token argmaxes of [T, |I|] logits; ties go to the
// tied intent with the largest mean softmax probability.
std::int64_t vote_intent(const Tensor& token_logits);

// Rewrites every I-X without a B-X/I-X predecessor to B-X.
std::vector<std::string> repair_bio(std::vector<std::string> tags);

// ---- batched, forward-only views ----

struct IntentDecoding {
  Tensor token_logits;                      // [B, T, |I|], zero past each length
  std::vector<std::int64_t> sentence_intent;
};
IntentDecoding decode_intent(IntentDecoder& decoder, const EncoderOutput& enc);

// intent_token_dists: [B, T, |I|], rows normalised on unmasked positions.
Tensor decode_slots(SlotDecoder& decoder, const EncoderOutput& enc, const Tensor& intent_token_dists);

// Row-wise softmax of [B, T, c] on unmasked positions, zero elsewhere.
Tensor masked_softmax(const Tensor& logits, const IndexTensor& mask);

struct SluLoss {
  double intent;
  double slot;
};
// Token-mean NLL; intent targets are the sentence label at every token.
SluLoss slu_loss(const Tensor& token_logits, const Tensor& slot_logits, const SLUBatch& batch);

// Graph version for one batch: both terms averaged over every unmasked token.
struct SluLossVars {
  ag::Var intent;
  ag::Var slot;
};
SluLossVars slu_loss(const std::vector<SluOutputs>& outputs, const SLUBatch& batch);

struct SluPrediction {
  std::string intent;
  std::vector<std::string> slots;
};
// "intent<TAB>tag1 tag2 ..." per line.
void write_slu_predictions(std::ostream& out, const std::vector<SluPrediction>& predictions);

}  // namespace granenc
