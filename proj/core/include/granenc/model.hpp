#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "granenc/config.hpp"
#include "granenc/datasets.hpp"
#include "granenc/embedding.hpp"
#include "granenc/encoder.hpp"
#include "granenc/mrc_head.hpp"
#include "granenc/slu_head.hpp"

namespace granenc {

enum class ParamGroup { shared_encoder, embeddings, slu_decoders, mrc_head };
std::string_view to_string(ParamGroup group);
inline constexpr ParamGroup kAllGroups[] = {ParamGroup::shared_encoder, ParamGroup::embeddings,
                                            ParamGroup::slu_decoders, ParamGroup::mrc_head};

// Non-owning view of every trainable tensor, partitioned into disjoint groups.
class ParameterRegistry {
 public:
  void add(ParamGroup group, const std::vector<Parameter*>& params);

  const std::vector<Parameter*>& group(ParamGroup g) const;
  std::vector<Parameter*> all() const;
  Parameter* find(std::string_view name) const;

  // Throws ContractError if a tensor appears twice or names collide.
  void validate() const;

  // FNV-1a over names, shapes and raw value bytes of a group.
  std::uint64_t hash(ParamGroup g) const;

 private:
  std::map<ParamGroup, std::vector<Parameter*>> groups_;
};

// Vocabularies and label spaces a model is built against.
struct ModelVocab {
  Vocabulary words;
  Vocabulary chars;
  LabelSet intents;
  LabelSet slots;
};

// All task modules wired together: shared input embeddings, the shared
// encoder, SLU decoders and the MRC reader with injection.
class JointModel {
 public:
  JointModel(const TrainConfig& config, ModelVocab vocab);
  JointModel(const JointModel&) = delete;
  JointModel& operator=(const JointModel&) = delete;

  const TrainConfig& config() const { return config_; }
  const ModelVocab& vocab() const { return vocab_; }
  TextEncoder text_encoder() const;

  InputEmbedder& embedder() { return embedder_; }
  SharedEncoder& encoder() { return encoder_; }
  SluHead& slu() { return slu_; }
  MrcHead& mrc() { return mrc_; }

  // Width of the injected shared-encoder states (0 with injection off).
  std::size_t injection_width() const;

  // Contextual features per corpus; null falls back to the embedder default.
  void set_mrc_provider(std::shared_ptr<const ContextualFeatureProvider> provider);
  void set_slu_provider(std::shared_ptr<const ContextualFeatureProvider> provider);
  std::size_t mrc_input_width() const { return mrc_.input_dim(); }

  ParameterRegistry registry();

  std::vector<SpanLogits> forward_mrc(ag::Graph& g, const MRCBatch& batch);
  std::vector<SluOutputs> forward_slu(ag::Graph& g, const SLUBatch& batch);

  // Injected representation of one sequence of the batch.
  ag::Var mrc_representation(ag::Graph& g, const SequenceBatch& seq, std::size_t b, bool is_question);

  SpanPrediction predict_span(const MRCExample& example);
  std::map<std::string, std::string> predict_answers(const std::vector<MRCExample>& examples);
  SluPrediction predict_slu(const std::vector<std::string>& tokens);

 private:
  TrainConfig config_;
  ModelVocab vocab_;
  Rng rng_;
  InputEmbedder embedder_;
  SharedEncoder encoder_;
  SluHead slu_;
  MrcHead mrc_;
  std::shared_ptr<const ContextualFeatureProvider> mrc_provider_;
  std::shared_ptr<const ContextualFeatureProvider> slu_provider_;

  ag::Var embed_slu(ag::Graph& g, const SequenceBatch& seq, std::size_t b);
};

}  // namespace granenc
