#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "granenc/tensor.hpp"
#include "granenc/tokenizer.hpp"

namespace granenc {

// One SQuAD 2.0 question with its passage. Token spans are inclusive.
struct MRCExample {
  std::string qid;
  std::vector<std::string> passage_tokens;
  std::vector<std::string> question_tokens;
  std::optional<std::size_t> answer_start_token;
  std::optional<std::size_t> answer_end_token;
  bool is_impossible = false;
  std::string raw_context;
  std::string raw_answer_text;
  // Location of each passage token inside raw_context.
  std::vector<Token> passage_spans;
  // Every gold answer text, for scoring; empty for unanswerable questions.
  std::vector<std::string> gold_answers;
};

// Throws ValidationError if any MRCExample invariant is broken.
void validate(const MRCExample& ex);

// Text of passage tokens [first, last] as it appears in the raw context.
std::string passage_text(const MRCExample& ex, std::size_t first, std::size_t last);

struct SquadOptions {
  std::size_t max_passage_tokens = 400;
  // Keep answerable questions whose answer does not align to token
  // boundaries, without span targets. Only meaningful for inference.
  bool keep_unaligned = false;
};

struct SquadParseResult {
  std::vector<MRCExample> examples;
  std::size_t dropped_unaligned = 0;
  std::size_t dropped_empty = 0;
  // Answerable questions whose span fell past the passage cap.
  std::size_t truncated_to_impossible = 0;
};

SquadParseResult parse_squad(const std::filesystem::path& path, const SquadOptions& options = {});
SquadParseResult parse_squad_text(std::string_view json_text, const SquadOptions& options = {});

// One SNIPS utterance.
struct SLUExample {
  std::vector<std::string> tokens;
  std::string intent;
  std::vector<std::string> slots;

  bool operator==(const SLUExample&) const = default;
};

enum class Split { train, valid, test };
std::string_view split_name(Split split);
Split parse_split(std::string_view name);

// Index (0-based) of the first tag violating BIO well-formedness, if any.
std::optional<std::size_t> find_bio_violation(const std::vector<std::string>& tags);
// Type of a B-/I- tag ("genre" for "B-genre"); empty for "O".
std::string_view tag_type(std::string_view tag);

// Reads <dir>/<split>/{seq.in,seq.out,label}.
std::vector<SLUExample> parse_snips(const std::filesystem::path& dir, Split split);
void write_snips(const std::filesystem::path& split_dir, const std::vector<SLUExample>& examples);

// Token <-> id map with PAD at 0 and UNK at 1.
class Vocabulary {
 public:
  static constexpr std::int64_t kPadId = 0;
  static constexpr std::int64_t kUnkId = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();
  // Ordered token list including PAD and UNK at the front.
  static Vocabulary from_tokens(std::vector<std::string> id_to_token);

  std::int64_t pad_id() const { return kPadId; }
  std::int64_t unk_id() const { return kUnkId; }
  std::size_t size() const { return id_to_token_.size(); }
  std::int64_t lookup(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(std::int64_t id) const { return id_to_token_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  bool operator==(const Vocabulary& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  void add(std::string token);

  std::unordered_map<std::string, std::int64_t> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// Frequency-descending then lexicographic; tokens below min_count omitted.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpora, std::size_t min_count);
// Same ordering over the code points of every token.
Vocabulary build_char_vocab(const std::vector<std::vector<std::string>>& corpora, std::size_t min_count);

// Closed label space (intents, slot tags) in sorted order.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> labels);

  std::size_t size() const { return labels_.size(); }
  std::int64_t id(std::string_view label) const;
  const std::string& name(std::int64_t id) const;
  const std::vector<std::string>& labels() const { return labels_; }
  bool operator==(const LabelSet& other) const { return labels_ == other.labels_; }

 private:
  std::vector<std::string> labels_;
  std::map<std::string, std::int64_t, std::less<>> index_;
};

LabelSet intent_labels(const std::vector<SLUExample>& examples);
LabelSet slot_labels(const std::vector<SLUExample>& examples);

// Maps token strings to word ids and per-word character ids.
struct TextEncoder {
  const Vocabulary* words = nullptr;
  const Vocabulary* chars = nullptr;
  std::size_t max_word_chars = 16;
  // Character rows are padded to at least this many positions.
  std::size_t min_char_width = 1;

  std::vector<std::int64_t> char_ids(std::string_view word) const;
};

// A padded batch of token sequences.
struct SequenceBatch {
  IndexTensor token_ids;  // [B, T_max], PAD beyond length
  IndexTensor char_ids;   // [B, T_max, C_max], PAD beyond word length
  IndexTensor lengths;    // [B]
  IndexTensor mask;       // [B, T_max], 1 iff t < length
  std::vector<std::vector<std::string>> tokens;

  std::size_t batch_size() const { return lengths.size(); }
  std::size_t max_length() const { return token_ids.rank() == 2 ? token_ids.dim(1) : 0; }
  std::size_t length(std::size_t b) const { return static_cast<std::size_t>(lengths[b]); }
};

SequenceBatch encode_sequences(const std::vector<const std::vector<std::string>*>& sequences,
                               const TextEncoder& encoder);

struct MRCBatch {
  std::vector<std::size_t> example_indices;
  SequenceBatch passage;
  SequenceBatch question;
  // Targets in virtual-null coordinates: 0 is "no answer", token t is t+1.
  IndexTensor span_start;  // [B]
  IndexTensor span_end;    // [B]
  IndexTensor no_answer;   // [B]
};

struct SLUBatch {
  std::vector<std::size_t> example_indices;
  SequenceBatch utterance;
  IndexTensor intent;  // [B]
  IndexTensor slots;   // [B, T_max], 0 beyond length (masked)
};

// Deterministic partition of [0, n) into batches of at most batch_size.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    bool shuffle);

std::vector<MRCBatch> make_batches(const std::vector<MRCExample>& examples, const TextEncoder& encoder,
                                   std::size_t batch_size, std::uint64_t seed, bool shuffle);
std::vector<SLUBatch> make_batches(const std::vector<SLUExample>& examples, const TextEncoder& encoder,
                                   const LabelSet& intents, const LabelSet& slots, std::size_t batch_size,
                                   std::uint64_t seed, bool shuffle);

}  // namespace granenc
