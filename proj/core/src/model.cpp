#include "granenc/model.hpp"

#include <cstring>
#include <set>

namespace granenc {

std::string_view to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::shared_encoder:
      return "shared_encoder";
    case ParamGroup::embeddings:
      return "embeddings";
    case ParamGroup::slu_decoders:
      return "slu_decoders";
    case ParamGroup::mrc_head:
      return "mrc_head";
  }
  return "?";
}

void ParameterRegistry::add(ParamGroup group, const std::vector<Parameter*>& params) {
  auto& dst = groups_[group];
  dst.insert(dst.end(), params.begin(), params.end());
}

const std::vector<Parameter*>& ParameterRegistry::group(ParamGroup g) const {
  static const std::vector<Parameter*> empty;
  auto it = groups_.find(g);
  return it == groups_.end() ? empty : it->second;
}

std::vector<Parameter*> ParameterRegistry::all() const {
  std::vector<Parameter*> out;
  for (const auto& [g, params] : groups_) out.insert(out.end(), params.begin(), params.end());
  return out;
}

Parameter* ParameterRegistry::find(std::string_view name) const {
  for (const auto& [g, params] : groups_)
    for (Parameter* p : params)
      if (p->name == name) return p;
  return nullptr;
}

void ParameterRegistry::validate() const {
  std::set<const Parameter*> seen;
  std::set<std::string> names;
  for (const auto& [g, params] : groups_) {
    for (const Parameter* p : params) {
      if (!seen.insert(p).second) throw ContractError("parameter " + p->name + " registered twice");
      if (!names.insert(p->name).second) throw ContractError("duplicate parameter name " + p->name);
    }
  }
}

std::uint64_t ParameterRegistry::hash(ParamGroup g) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const Parameter* p : group(g)) {
    mix(p->name.data(), p->name.size());
    for (std::size_t d : p->value.shape()) mix(&d, sizeof d);
    mix(p->value.data(), p->value.size() * sizeof(double));
  }
  return h;
}

JointModel::JointModel(const TrainConfig& config, ModelVocab vocab)
    : config_(config),
      vocab_(std::move(vocab)),
      rng_((config.validate(), config.seed)),
      embedder_(vocab_.words.size(), config.word_dim, vocab_.chars.size(), config.char_dim, config.char_kernel,
                config.char_filters, config.ctx_dim, rng_),
      encoder_(embedder_.output_dim(), config.lstm_hidden, config.attn_dim, rng_),
      slu_(encoder_.output_dim(), config.decoder_hidden, std::max<std::size_t>(vocab_.intents.size(), 1),
           std::max<std::size_t>(vocab_.slots.size(), 1), rng_),
      mrc_(embedder_.output_dim() + (config.inject_scope == InjectScope::none ? 0 : encoder_.output_dim()),
           config.mrc_hidden, rng_) {}

TextEncoder JointModel::text_encoder() const {
  TextEncoder enc;
  enc.words = &vocab_.words;
  enc.chars = &vocab_.chars;
  enc.max_word_chars = config_.max_word_chars;
  enc.min_char_width = config_.char_kernel;
  return enc;
}

std::size_t JointModel::injection_width() const {
  return config_.inject_scope == InjectScope::none ? 0 : encoder_.output_dim();
}

namespace {

void check_provider(const std::shared_ptr<const ContextualFeatureProvider>& p, std::size_t ctx_dim) {
  if (p && p->dim() != ctx_dim) {
    throw IntegrationError("contextual provider width " + std::to_string(p->dim()) + " does not match ctx_dim " +
                           std::to_string(ctx_dim));
  }
}

}  // namespace

void JointModel::set_mrc_provider(std::shared_ptr<const ContextualFeatureProvider> provider) {
  check_provider(provider, config_.ctx_dim);
  mrc_provider_ = std::move(provider);
}

void JointModel::set_slu_provider(std::shared_ptr<const ContextualFeatureProvider> provider) {
  check_provider(provider, config_.ctx_dim);
  slu_provider_ = std::move(provider);
}

ag::Var JointModel::embed_slu(ag::Graph& g, const SequenceBatch& seq, std::size_t b) {
  return embedder_.forward(g, seq, b, slu_provider_.get());
}

ParameterRegistry JointModel::registry() {
  ParameterRegistry r;
  r.add(ParamGroup::embeddings, embedder_.parameters());
  r.add(ParamGroup::shared_encoder, encoder_.parameters());
  r.add(ParamGroup::slu_decoders, slu_.parameters());
  r.add(ParamGroup::mrc_head, mrc_.parameters());
  r.validate();
  return r;
}

ag::Var JointModel::mrc_representation(ag::Graph& g, const SequenceBatch& seq, std::size_t b, bool is_question) {
  ag::Var emb = embedder_.forward(g, seq, b, mrc_provider_.get());
  switch (config_.inject_scope) {
    case InjectScope::none:
      return emb;
    case InjectScope::question:
      return inject(g, emb, &encoder_, config_.detach_injection, !is_question);
    case InjectScope::both:
      return inject(g, emb, &encoder_, config_.detach_injection);
  }
  return emb;
}

std::vector<SpanLogits> JointModel::forward_mrc(ag::Graph& g, const MRCBatch& batch) {
  std::vector<SpanLogits> out;
  for (std::size_t b = 0; b < batch.passage.batch_size(); ++b) {
    ag::Var p = mrc_representation(g, batch.passage, b, false);
    ag::Var q = mrc_representation(g, batch.question, b, true);
    out.push_back(mrc_.forward(g, p, q));
  }
  return out;
}

std::vector<SluOutputs> JointModel::forward_slu(ag::Graph& g, const SLUBatch& batch) {
  std::vector<SluOutputs> out;
  for (std::size_t b = 0; b < batch.utterance.batch_size(); ++b) {
    ag::Var emb = embed_slu(g, batch.utterance, b);
    out.push_back(slu_.forward(g, encoder_.forward(g, emb).token_states));
  }
  return out;
}

SpanPrediction JointModel::predict_span(const MRCExample& example) {
  const TextEncoder enc = text_encoder();
  const SequenceBatch passage = encode_sequences({&example.passage_tokens}, enc);
  const SequenceBatch question = encode_sequences({&example.question_tokens}, enc);
  ag::Graph g;
  ag::Var p = mrc_representation(g, passage, 0, false);
  ag::Var q = mrc_representation(g, question, 0, true);
  SpanLogits logits = mrc_.forward(g, p, q);
  SpanPrediction pred = decode_answer(logits.start.value().values(), logits.end.value().values(),
                                      config_.max_answer_len, config_.null_threshold);
  pred.qid = example.qid;
  return pred;
}

std::map<std::string, std::string> JointModel::predict_answers(const std::vector<MRCExample>& examples) {
  std::map<std::string, std::string> out;
  for (const MRCExample& ex : examples) out[ex.qid] = render_answer(ex, predict_span(ex));
  return out;
}

SluPrediction JointModel::predict_slu(const std::vector<std::string>& tokens) {
  const SequenceBatch seq = encode_sequences({&tokens}, text_encoder());
  ag::Graph g;
  ag::Var emb = embed_slu(g, seq, 0);
  SluOutputs out = slu_.forward(g, encoder_.forward(g, emb).token_states);
  SluPrediction pred;
  pred.intent = vocab_.intents.name(vote_intent(out.intent_logits.value()));
  const Tensor& slots = out.slot_logits.value();
  for (std::size_t t = 0; t < slots.rows(); ++t) {
    const auto row = slots.row(t);
    const auto best = static_cast<std::int64_t>(std::max_element(row.begin(), row.end()) - row.begin());
    pred.slots.push_back(vocab_.slots.name(best));
  }
  pred.slots = repair_bio(std::move(pred.slots));
  return pred;
}

}  // namespace granenc
