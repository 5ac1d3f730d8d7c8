#include "granenc/datasets.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "granenc/rng.hpp"
#include "granenc/unicode.hpp"

namespace granenc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw SchemaError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(where + ": missing required field \"" + key + "\"");
  return *it;
}

const std::string& require_string(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_string()) throw SchemaError(where + ": field \"" + key + "\" must be a string");
  return v.get_ref<const std::string&>();
}

const json& require_array(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_array()) throw SchemaError(where + ": field \"" + key + "\" must be an array");
  return v;
}

std::size_t code_point_length(std::string_view s) { return unicode::decode(s).size(); }

// Strips leading/trailing whitespace, returning the stripped text and how
// many code points were removed from the front.
std::pair<std::string, std::size_t> strip(std::string_view s) {
  const auto cps = unicode::decode(s);
  std::size_t b = 0, e = cps.size();
  while (b < e && unicode::is_whitespace(cps[b].value)) ++b;
  while (e > b && unicode::is_whitespace(cps[e - 1].value)) --e;
  if (b == e) return {std::string(), b};
  return {std::string(s.substr(cps[b].byte_begin, cps[e - 1].byte_end - cps[b].byte_begin)), b};
}

}  // namespace

void validate(const MRCExample& ex) {
  const std::string where = "example " + ex.qid;
  if (ex.passage_tokens.empty()) throw ValidationError(where + ": empty passage");
  if (ex.question_tokens.empty()) throw ValidationError(where + ": empty question");
  const bool has_start = ex.answer_start_token.has_value();
  const bool has_end = ex.answer_end_token.has_value();
  if (has_start != has_end || ex.is_impossible == has_start) {
    throw ValidationError(where + ": is_impossible must hold exactly when the span is absent");
  }
  if (has_start && !(*ex.answer_start_token <= *ex.answer_end_token &&
                     *ex.answer_end_token < ex.passage_tokens.size())) {
    throw ValidationError(where + ": span outside passage");
  }
}

std::string passage_text(const MRCExample& ex, std::size_t first, std::size_t last) {
  if (first > last || last >= ex.passage_spans.size()) throw ContractError("passage_text: bad token range");
  const std::size_t b = ex.passage_spans[first].byte_begin;
  const std::size_t e = ex.passage_spans[last].byte_end;
  return ex.raw_context.substr(b, e - b);
}

SquadParseResult parse_squad(const fs::path& path, const SquadOptions& options) {
  return parse_squad_text(read_file(path), options);
}

SquadParseResult parse_squad_text(std::string_view text, const SquadOptions& options) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("malformed JSON at byte offset " + std::to_string(e.byte) + ": " + e.what());
  }
  SquadParseResult result;
  const json& data = require_array(root, "data", "$");
  for (std::size_t di = 0; di < data.size(); ++di) {
    const std::string dpath = "$.data[" + std::to_string(di) + "]";
    const json& paragraphs = require_array(data[di], "paragraphs", dpath);
    for (std::size_t pi = 0; pi < paragraphs.size(); ++pi) {
      const std::string ppath = dpath + ".paragraphs[" + std::to_string(pi) + "]";
      const std::string& context = require_string(paragraphs[pi], "context", ppath);
      const std::vector<Token> full = tokenize(context);
      std::vector<Token> spans = full;
      const bool truncated = spans.size() > options.max_passage_tokens;
      if (truncated) spans.resize(options.max_passage_tokens);
      const json& qas = require_array(paragraphs[pi], "qas", ppath);
      for (std::size_t qi = 0; qi < qas.size(); ++qi) {
        const std::string qpath = ppath + ".qas[" + std::to_string(qi) + "]";
        MRCExample ex;
        ex.qid = require_string(qas[qi], "id", qpath);
        const std::string where = "question " + ex.qid + " (" + qpath + ")";
        const std::string& question = require_string(qas[qi], "question", where);
        const json& impossible = require(qas[qi], "is_impossible", where);
        if (!impossible.is_boolean()) throw SchemaError(where + ": field \"is_impossible\" must be a boolean");
        const json& answers = require_array(qas[qi], "answers", where);
        struct Answer {
          std::string text;
          std::size_t start;
        };
        std::vector<Answer> parsed;
        for (std::size_t ai = 0; ai < answers.size(); ++ai) {
          const std::string apath = where + ".answers[" + std::to_string(ai) + "]";
          const std::string& atext = require_string(answers[ai], "text", apath);
          const json& astart = require(answers[ai], "answer_start", apath);
          if (!astart.is_number_integer() || astart.get<std::int64_t>() < 0) {
            throw SchemaError(apath + ": field \"answer_start\" must be a non-negative integer");
          }
          parsed.push_back({atext, astart.get<std::size_t>()});
        }

        ex.raw_context = context;
        ex.passage_spans = spans;
        ex.passage_tokens = token_texts(spans);
        ex.question_tokens = token_texts(tokenize(question));
        ex.is_impossible = impossible.get<bool>() || parsed.empty();
        if (!ex.is_impossible) {
          for (const Answer& a : parsed) ex.gold_answers.push_back(a.text);
        }
        if (ex.passage_tokens.empty() || ex.question_tokens.empty()) {
          ++result.dropped_empty;
          continue;
        }
        if (!ex.is_impossible) {
          // Training targets come from the first answer only.
          auto [atext, lead] = strip(parsed.front().text);
          const std::size_t cbegin = parsed.front().start + lead;
          const std::size_t cend = cbegin + code_point_length(atext);
          std::optional<std::size_t> s, e;
          for (std::size_t t = 0; t < full.size(); ++t) {
            if (full[t].char_begin == cbegin) s = t;
            if (full[t].char_end == cend) e = t;
          }
          if (!atext.empty() && s && e && *s <= *e) {
            if (*e < spans.size()) {
              ex.answer_start_token = s;
              ex.answer_end_token = e;
              ex.raw_answer_text = atext;
            } else {
              ex.is_impossible = true;
              ++result.truncated_to_impossible;
            }
          } else if (options.keep_unaligned) {
            // kept without targets; the example is for prediction only
          } else {
            ++result.dropped_unaligned;
            continue;
          }
        }
        if (ex.answer_start_token || ex.is_impossible) validate(ex);
        result.examples.push_back(std::move(ex));
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------- SNIPS

std::string_view split_name(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::valid:
      return "valid";
    case Split::test:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "valid" || name == "dev") return Split::valid;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split \"" + std::string(name) + "\"");
}

std::string_view tag_type(std::string_view tag) {
  if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') return tag.substr(2);
  return {};
}

std::optional<std::size_t> find_bio_violation(const std::vector<std::string>& tags) {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& t = tags[i];
    if (t == "O") continue;
    const std::string_view type = tag_type(t);
    if (type.empty()) return i;
    if (t[0] == 'I') {
      if (i == 0 || tag_type(tags[i - 1]) != type) return i;
    }
  }
  return std::nullopt;
}

namespace {

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

}  // namespace

std::vector<SLUExample> parse_snips(const fs::path& dir, Split split) {
  const fs::path base = dir / std::string(split_name(split));
  const fs::path in_path = base / "seq.in";
  const fs::path out_path = base / "seq.out";
  const fs::path label_path = base / "label";
  const auto seq_in = read_lines(in_path);
  const auto seq_out = read_lines(out_path);
  const auto labels = read_lines(label_path);
  if (seq_in.size() != seq_out.size() || seq_in.size() != labels.size()) {
    throw AlignmentError("line counts differ: " + in_path.string() + " has " + std::to_string(seq_in.size()) +
                         ", " + out_path.string() + " has " + std::to_string(seq_out.size()) + ", " +
                         label_path.string() + " has " + std::to_string(labels.size()));
  }
  std::vector<SLUExample> out;
  out.reserve(seq_in.size());
  for (std::size_t i = 0; i < seq_in.size(); ++i) {
    const std::string where = base.string() + " line " + std::to_string(i + 1);
    SLUExample ex{split_ws(seq_in[i]), std::string(), split_ws(seq_out[i])};
    const auto intent = split_ws(labels[i]);
    if (ex.tokens.empty()) throw ValidationError(where + ": empty utterance");
    if (intent.size() != 1) throw ValidationError(where + ": expected exactly one intent label");
    ex.intent = intent.front();
    if (ex.tokens.size() != ex.slots.size()) {
      throw AlignmentError(where + ": " + std::to_string(ex.tokens.size()) + " tokens but " +
                           std::to_string(ex.slots.size()) + " tags");
    }
    if (auto bad = find_bio_violation(ex.slots)) {
      throw ValidationError(where + ": malformed BIO tag \"" + ex.slots[*bad] + "\" at position " +
                            std::to_string(*bad + 1));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void write_snips(const fs::path& split_dir, const std::vector<SLUExample>& examples) {
  fs::create_directories(split_dir);
  std::ofstream in(split_dir / "seq.in", std::ios::binary);
  std::ofstream out(split_dir / "seq.out", std::ios::binary);
  std::ofstream label(split_dir / "label", std::ios::binary);
  if (!in || !out || !label) throw IoError("cannot write SNIPS files under " + split_dir.string());
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ' ';
      s += v[i];
    }
    return s;
  };
  for (const SLUExample& ex : examples) {
    in << join(ex.tokens) << '\n';
    out << join(ex.slots) << '\n';
    label << ex.intent << '\n';
  }
}

// ---------------------------------------------------------------- vocabularies

Vocabulary::Vocabulary() {
  add(std::string(kPadToken));
  add(std::string(kUnkToken));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> id_to_token) {
  if (id_to_token.size() < 2 || id_to_token[0] != kPadToken || id_to_token[1] != kUnkToken) {
    throw ValidationError("vocabulary must start with " + std::string(kPadToken) + " and " + std::string(kUnkToken));
  }
  Vocabulary v;
  for (std::size_t i = 2; i < id_to_token.size(); ++i) {
    if (v.contains(id_to_token[i])) throw ValidationError("duplicate vocabulary entry \"" + id_to_token[i] + "\"");
    v.add(std::move(id_to_token[i]));
  }
  return v;
}

void Vocabulary::add(std::string token) {
  token_to_id_.emplace(token, static_cast<std::int64_t>(id_to_token_.size()));
  id_to_token_.push_back(std::move(token));
}

std::int64_t Vocabulary::lookup(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return token_to_id_.count(std::string(token)) > 0; }

namespace {

Vocabulary vocab_from_counts(const std::map<std::string, std::size_t>& counts, std::size_t min_count) {
  std::vector<std::pair<std::string, std::size_t>> entries;
  for (const auto& [tok, n] : counts) {
    if (n >= min_count && tok != Vocabulary::kPadToken && tok != Vocabulary::kUnkToken) entries.emplace_back(tok, n);
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> ordered{std::string(Vocabulary::kPadToken), std::string(Vocabulary::kUnkToken)};
  for (auto& e : entries) ordered.push_back(std::move(e.first));
  return Vocabulary::from_tokens(std::move(ordered));
}

}  // namespace

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpora, std::size_t min_count) {
  if (min_count < 1) throw ContractError("build_vocab: min_count must be at least 1");
  if (corpora.empty()) throw ContractError("build_vocab: empty corpora");
  std::map<std::string, std::size_t> counts;  // lexicographic iteration order
  for (const auto& seq : corpora)
    for (const auto& tok : seq) ++counts[tok];
  return vocab_from_counts(counts, min_count);
}

Vocabulary build_char_vocab(const std::vector<std::vector<std::string>>& corpora, std::size_t min_count) {
  if (min_count < 1) throw ContractError("build_char_vocab: min_count must be at least 1");
  if (corpora.empty()) throw ContractError("build_char_vocab: empty corpora");
  std::map<std::string, std::size_t> counts;
  for (const auto& seq : corpora)
    for (const auto& tok : seq)
      for (const auto& cp : unicode::decode(tok)) ++counts[tok.substr(cp.byte_begin, cp.byte_end - cp.byte_begin)];
  return vocab_from_counts(counts, min_count);
}

LabelSet::LabelSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!index_.emplace(labels_[i], static_cast<std::int64_t>(i)).second) {
      throw ValidationError("duplicate label \"" + labels_[i] + "\"");
    }
  }
}

std::int64_t LabelSet::id(std::string_view label) const {
  auto it = index_.find(label);
  if (it == index_.end()) throw LabelError("unknown label \"" + std::string(label) + "\"");
  return it->second;
}

const std::string& LabelSet::name(std::int64_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= labels_.size()) {
    throw LabelError("label id " + std::to_string(id) + " outside label space");
  }
  return labels_[static_cast<std::size_t>(id)];
}

LabelSet intent_labels(const std::vector<SLUExample>& examples) {
  std::set<std::string> s;
  for (const auto& ex : examples) s.insert(ex.intent);
  return LabelSet({s.begin(), s.end()});
}

LabelSet slot_labels(const std::vector<SLUExample>& examples) {
  std::set<std::string> s{"O"};
  for (const auto& ex : examples) s.insert(ex.slots.begin(), ex.slots.end());
  return LabelSet({s.begin(), s.end()});
}

// ---------------------------------------------------------------- batching

std::vector<std::int64_t> TextEncoder::char_ids(std::string_view word) const {
  std::vector<std::int64_t> ids;
  for (const auto& cp : unicode::decode(word)) {
    if (ids.size() == max_word_chars) break;
    ids.push_back(chars->lookup(word.substr(cp.byte_begin, cp.byte_end - cp.byte_begin)));
  }
  return ids;
}

SequenceBatch encode_sequences(const std::vector<const std::vector<std::string>*>& sequences,
                               const TextEncoder& encoder) {
  if (!encoder.words || !encoder.chars) throw ContractError("encode_sequences: encoder has no vocabularies");
  const std::size_t b = sequences.size();
  std::size_t t_max = 0;
  std::size_t c_max = std::max<std::size_t>(encoder.min_char_width, 1);
  std::vector<std::vector<std::vector<std::int64_t>>> chars(b);
  for (std::size_t i = 0; i < b; ++i) {
    t_max = std::max(t_max, sequences[i]->size());
    for (const auto& w : *sequences[i]) {
      chars[i].push_back(encoder.char_ids(w));
      c_max = std::max(c_max, chars[i].back().size());
    }
  }
  SequenceBatch out;
  out.token_ids = IndexTensor({b, t_max}, Vocabulary::kPadId);
  out.char_ids = IndexTensor({b, t_max, c_max}, Vocabulary::kPadId);
  out.lengths = IndexTensor({b}, 0);
  out.mask = IndexTensor({b, t_max}, 0);
  for (std::size_t i = 0; i < b; ++i) {
    const auto& seq = *sequences[i];
    out.lengths[i] = static_cast<std::int64_t>(seq.size());
    for (std::size_t t = 0; t < seq.size(); ++t) {
      out.token_ids.at(i, t) = encoder.words->lookup(seq[t]);
      out.mask.at(i, t) = 1;
      for (std::size_t c = 0; c < chars[i][t].size(); ++c) out.char_ids.at(i, t, c) = chars[i][t][c];
    }
    out.tokens.push_back(seq);
  }
  return out;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    bool shuffle) {
  if (batch_size < 1) throw ContractError("batch_size must be at least 1");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (shuffle) {
    Rng rng(seed);
    rng.shuffle(order);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return batches;
}

std::vector<MRCBatch> make_batches(const std::vector<MRCExample>& examples, const TextEncoder& encoder,
                                   std::size_t batch_size, std::uint64_t seed, bool shuffle) {
  std::vector<MRCBatch> out;
  for (auto& idx : batch_indices(examples.size(), batch_size, seed, shuffle)) {
    MRCBatch batch;
    std::vector<const std::vector<std::string>*> passages, questions;
    batch.span_start = IndexTensor({idx.size()}, 0);
    batch.span_end = IndexTensor({idx.size()}, 0);
    batch.no_answer = IndexTensor({idx.size()}, 0);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const MRCExample& ex = examples[idx[i]];
      passages.push_back(&ex.passage_tokens);
      questions.push_back(&ex.question_tokens);
      if (ex.is_impossible) {
        batch.no_answer[i] = 1;
      } else if (ex.answer_start_token) {
        batch.span_start[i] = static_cast<std::int64_t>(*ex.answer_start_token) + 1;
        batch.span_end[i] = static_cast<std::int64_t>(*ex.answer_end_token) + 1;
      } else {
        throw ContractError("example " + ex.qid + " has no training target");
      }
    }
    batch.passage = encode_sequences(passages, encoder);
    batch.question = encode_sequences(questions, encoder);
    batch.example_indices = std::move(idx);
    out.push_back(std::move(batch));
  }
  return out;
}

std::vector<SLUBatch> make_batches(const std::vector<SLUExample>& examples, const TextEncoder& encoder,
                                   const LabelSet& intents, const LabelSet& slots, std::size_t batch_size,
                                   std::uint64_t seed, bool shuffle) {
  std::vector<SLUBatch> out;
  for (auto& idx : batch_indices(examples.size(), batch_size, seed, shuffle)) {
    SLUBatch batch;
    std::vector<const std::vector<std::string>*> seqs;
    for (std::size_t i : idx) seqs.push_back(&examples[i].tokens);
    batch.utterance = encode_sequences(seqs, encoder);
    batch.intent = IndexTensor({idx.size()}, 0);
    batch.slots = IndexTensor({idx.size(), batch.utterance.max_length()}, 0);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const SLUExample& ex = examples[idx[i]];
      batch.intent[i] = intents.id(ex.intent);
      for (std::size_t t = 0; t < ex.slots.size(); ++t) batch.slots.at(i, t) = slots.id(ex.slots[t]);
    }
    batch.example_indices = std::move(idx);
    out.push_back(std::move(batch));
  }
  return out;
}

}  // namespace granenc
