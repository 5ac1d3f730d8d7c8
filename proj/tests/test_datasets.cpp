#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "granenc/datasets.hpp"
#include "granenc/evaluation.hpp"
#include "granenc/synthetic.hpp"
#include "support.hpp"

using namespace granenc;
using nlohmann::json;
using testing_support::TempDir;
using testing_support::write_file;

namespace {

json qa(const std::string& id, const std::string& question, json answers, bool impossible = false) {
  return {{"id", id}, {"question", question}, {"answers", std::move(answers)}, {"is_impossible", impossible}};
}

std::string squad_doc(const std::string& context, std::vector<json> qas) {
  json doc = {{"version", "v2.0"},
              {"data", json::array({{{"title", "t"},
                                     {"paragraphs", json::array({{{"context", context}, {"qas", qas}}})}}})}};
  return doc.dump();
}

void write_split(const std::filesystem::path& dir, const std::string& in, const std::string& out,
                 const std::string& label) {
  write_file(dir / "seq.in", in);
  write_file(dir / "seq.out", out);
  write_file(dir / "label", label);
}

}  // namespace

TEST(ParseSquad, AlignsAnswerToTokens) {
  const auto r = parse_squad_text(
      squad_doc("Super Bowl 50 was a game", {qa("q1", "What was it?", json::array({{{"text", "Super Bowl 50"},
                                                                                      {"answer_start", 0}}}))}));
  ASSERT_EQ(r.examples.size(), 1u);
  const MRCExample& ex = r.examples[0];
  EXPECT_EQ(ex.answer_start_token, 0u);
  EXPECT_EQ(ex.answer_end_token, 2u);
  EXPECT_FALSE(ex.is_impossible);
  EXPECT_EQ(ex.raw_answer_text, "Super Bowl 50");
  EXPECT_EQ(ex.question_tokens, (std::vector<std::string>{"What", "was", "it", "?"}));
}

TEST(ParseSquad, UnanswerableHasNoSpan) {
  const auto r = parse_squad_text(squad_doc("A short passage.", {qa("q1", "Why?", json::array(), true)}));
  ASSERT_EQ(r.examples.size(), 1u);
  EXPECT_TRUE(r.examples[0].is_impossible);
  EXPECT_FALSE(r.examples[0].answer_start_token.has_value());
  EXPECT_FALSE(r.examples[0].answer_end_token.has_value());
  EXPECT_TRUE(r.examples[0].gold_answers.empty());
}

TEST(ParseSquad, AnswerInsideTokenIsDroppedAndCounted) {
  const auto r = parse_squad_text(squad_doc(
      "Super Bowl 50 was a game",
      {qa("bad", "x?", json::array({{{"text", "uper"}, {"answer_start", 1}}})),
       qa("good", "y?", json::array({{{"text", "game"}, {"answer_start", 20}}}))}));
  EXPECT_EQ(r.dropped_unaligned, 1u);
  ASSERT_EQ(r.examples.size(), 1u);
  EXPECT_EQ(r.examples[0].qid, "good");
  EXPECT_EQ(r.examples[0].answer_start_token, 5u);
}

TEST(ParseSquad, OffsetsCountCodePoints) {
  const std::string context = "Caf\xC3\xA9 au lait is nice";
  const auto r = parse_squad_text(
      squad_doc(context, {qa("q", "What?", json::array({{{"text", "lait"}, {"answer_start", 8}}}))}));
  ASSERT_EQ(r.examples.size(), 1u);
  EXPECT_EQ(r.examples[0].answer_start_token, 2u);
}

TEST(ParseSquad, OnlyFirstAnswerIsTargetButAllAreGold) {
  const auto r = parse_squad_text(squad_doc(
      "red green blue", {qa("q", "which?", json::array({{{"text", "green"}, {"answer_start", 4}},
                                                         {{"text", "blue"}, {"answer_start", 10}}}))}));
  ASSERT_EQ(r.examples.size(), 1u);
  EXPECT_EQ(r.examples[0].answer_start_token, 1u);
  EXPECT_EQ(r.examples[0].gold_answers, (std::vector<std::string>{"green", "blue"}));
}

TEST(ParseSquad, SpanBeyondCapBecomesImpossible) {
  SquadOptions opts;
  opts.max_passage_tokens = 3;
  const auto r = parse_squad_text(
      squad_doc("a b c d e", {qa("q", "?", json::array({{{"text", "e"}, {"answer_start", 8}}}))}), opts);
  ASSERT_EQ(r.examples.size(), 1u);
  EXPECT_TRUE(r.examples[0].is_impossible);
  EXPECT_EQ(r.examples[0].passage_tokens.size(), 3u);
  EXPECT_EQ(r.truncated_to_impossible, 1u);
}

TEST(ParseSquad, MalformedJsonNamesByteOffset) {
  try {
    parse_squad_text("{\"data\": [1, 2,,]}");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos) << e.what();
  }
}

TEST(ParseSquad, MissingFieldNamesQidAndPath) {
  json doc = json::parse(squad_doc("ctx", {qa("q7", "?", json::array())}));
  doc["data"][0]["paragraphs"][0]["qas"][0].erase("question");
  try {
    parse_squad_text(doc.dump());
    FAIL();
  } catch (const SchemaError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("q7"), std::string::npos) << msg;
    EXPECT_NE(msg.find("qas[0]"), std::string::npos) << msg;
  }
}

TEST(ParseSquad, SpanTextNormalizesToAnswer) {
  for (const MRCExample& ex : toy_mrc_examples()) {
    validate(ex);
    if (ex.is_impossible) continue;
    EXPECT_EQ(normalize_answer(passage_text(ex, *ex.answer_start_token, *ex.answer_end_token)),
              normalize_answer(ex.raw_answer_text));
  }
}

TEST(Validate, RejectsInconsistentExamples) {
  MRCExample ex;
  ex.qid = "x";
  ex.passage_tokens = {"a"};
  ex.question_tokens = {"b"};
  ex.answer_start_token = 0;
  ex.answer_end_token = 0;
  EXPECT_NO_THROW(validate(ex));
  ex.answer_end_token = 1;
  EXPECT_THROW(validate(ex), ValidationError);
  ex.answer_end_token = 0;
  ex.is_impossible = true;
  EXPECT_THROW(validate(ex), ValidationError);
}

TEST(ParseSnips, MapsLinesToExamples) {
  TempDir tmp("snips");
  write_split(tmp / "train", "play some jazz\n", "O O B-genre\n", "PlayMusic\n");
  const auto ex = parse_snips(tmp.path(), Split::train);
  ASSERT_EQ(ex.size(), 1u);
  EXPECT_EQ(ex[0].tokens, (std::vector<std::string>{"play", "some", "jazz"}));
  EXPECT_EQ(ex[0].intent, "PlayMusic");
  EXPECT_EQ(ex[0].slots, (std::vector<std::string>{"O", "O", "B-genre"}));
}

TEST(ParseSnips, ToleratesCrlf) {
  TempDir tmp("snips");
  write_split(tmp / "valid", "a b\r\nc\r\n", "O O\r\nO\r\n", "X\r\nY\r\n");
  const auto ex = parse_snips(tmp.path(), Split::valid);
  ASSERT_EQ(ex.size(), 2u);
  EXPECT_EQ(ex[1].intent, "Y");
  EXPECT_EQ(ex[1].tokens, (std::vector<std::string>{"c"}));
}

TEST(ParseSnips, BioViolationNamesLineAndPosition) {
  TempDir tmp("snips");
  write_split(tmp / "train", "ok\nplay jazz\n", "O\nO I-genre\n", "A\nB\n");
  try {
    parse_snips(tmp.path(), Split::train);
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("position 2"), std::string::npos) << msg;
  }
}

TEST(ParseSnips, LineCountMismatchNamesFiles) {
  TempDir tmp("snips");
  write_split(tmp / "test", "a\nb\n", "O\n", "X\nY\n");
  try {
    parse_snips(tmp.path(), Split::test);
    FAIL();
  } catch (const AlignmentError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("seq.in"), std::string::npos) << msg;
    EXPECT_NE(msg.find("seq.out"), std::string::npos) << msg;
    EXPECT_NE(msg.find("label"), std::string::npos) << msg;
  }
}

TEST(ParseSnips, TokenTagMismatchNamesLine) {
  TempDir tmp("snips");
  write_split(tmp / "train", "a\nb c\n", "O\nO\n", "X\nY\n");
  try {
    parse_snips(tmp.path(), Split::train);
    FAIL();
  } catch (const AlignmentError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(ParseSnips, MissingFileIsAnIoErrorNamingThePath) {
  TempDir tmp("snips");
  write_file(tmp / "train" / "seq.in", "a\n");
  write_file(tmp / "train" / "label", "X\n");
  try {
    parse_snips(tmp.path(), Split::train);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("seq.out"), std::string::npos) << e.what();
  }
}

TEST(ParseSnips, RoundTripsThroughWriter) {
  TempDir tmp("snips");
  const auto examples = toy_slu_examples(12, 3);
  write_snips(tmp / "train", examples);
  EXPECT_EQ(parse_snips(tmp.path(), Split::train), examples);
}

TEST(Bio, ViolationPositions) {
  EXPECT_FALSE(find_bio_violation({"O", "B-x", "I-x", "I-x", "O"}).has_value());
  EXPECT_EQ(find_bio_violation({"O", "I-genre"}), 1u);
  EXPECT_EQ(find_bio_violation({"B-a", "I-b"}), 1u);
  EXPECT_EQ(find_bio_violation({"I-a"}), 0u);
  EXPECT_EQ(tag_type("B-city"), "city");
}

TEST(Vocab, FrequencyThreshold) {
  const Vocabulary v = build_vocab({{"a", "b", "a"}}, 2);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"<pad>", "<unk>", "a"}));
  EXPECT_EQ(v.lookup("zzz"), v.unk_id());
  EXPECT_EQ(v.lookup("b"), v.unk_id());
  EXPECT_NE(v.pad_id(), v.unk_id());
}

TEST(Vocab, FrequencyThenLexicographicOrder) {
  const Vocabulary v = build_vocab({{"y", "x", "y", "z"}, {"x", "y", "x", "w", "z", "z", "z"}}, 1);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"<pad>", "<unk>", "z", "x", "y", "w"}));
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v.lookup(v.token(static_cast<std::int64_t>(i))), static_cast<std::int64_t>(i));
}

TEST(Vocab, Errors) {
  EXPECT_THROW(build_vocab({}, 1), ContractError);
  EXPECT_THROW(build_vocab({{"a"}}, 0), ContractError);
  EXPECT_THROW(Vocabulary::from_tokens({"a", "b"}), ValidationError);
}

TEST(Vocab, CharVocabSplitsCodePoints) {
  const Vocabulary v = build_char_vocab({{"\xC3\xA9t\xC3\xA9"}}, 1);
  EXPECT_TRUE(v.contains("\xC3\xA9"));
  EXPECT_TRUE(v.contains("t"));
  EXPECT_EQ(v.size(), 4u);
}

TEST(Labels, SortedAndComplete) {
  const auto ex = toy_slu_examples(12, 1);
  const LabelSet slots = slot_labels(ex);
  EXPECT_NO_THROW(slots.id("O"));
  EXPECT_THROW(slots.id("B-nothing"), LabelError);
  EXPECT_THROW(slots.name(99), LabelError);
  EXPECT_TRUE(std::is_sorted(slots.labels().begin(), slots.labels().end()));
}

TEST(Batching, CeilingDivisionAndCoverage) {
  const auto batches = batch_indices(10, 4, 1, true);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[0].size(), 4u);
  EXPECT_EQ(batches[1].size(), 4u);
  EXPECT_EQ(batches[2].size(), 2u);
  std::vector<std::size_t> all;
  for (const auto& b : batches) all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(all[i], i);
}

TEST(Batching, DeterministicGivenSeed) {
  EXPECT_EQ(batch_indices(50, 8, 9, true), batch_indices(50, 8, 9, true));
  EXPECT_NE(batch_indices(50, 8, 9, true), batch_indices(50, 8, 10, true));
  EXPECT_EQ(batch_indices(5, 2, 1, false), (std::vector<std::vector<std::size_t>>{{0, 1}, {2, 3}, {4}}));
  EXPECT_THROW(batch_indices(5, 0, 1, false), ContractError);
}

TEST(Batching, PaddingAndMasks) {
  const Vocabulary words = build_vocab({{"a", "b", "c", "d", "e"}}, 1);
  const Vocabulary chars = build_char_vocab({{"a", "b", "c", "d", "e"}}, 1);
  TextEncoder enc{&words, &chars};
  const std::vector<std::string> s0 = {"a", "b", "c"}, s1 = {"a", "b", "c", "d", "e"};
  const SequenceBatch b = encode_sequences({&s0, &s1}, enc);
  EXPECT_EQ(b.token_ids.shape(), (Shape{2, 5}));
  EXPECT_EQ(b.mask.row(0)[0], 1);
  EXPECT_EQ(std::vector<std::int64_t>(b.mask.row(0).begin(), b.mask.row(0).end()),
            (std::vector<std::int64_t>{1, 1, 1, 0, 0}));
  EXPECT_EQ(b.token_ids.at(0, 3), Vocabulary::kPadId);
  EXPECT_EQ(b.char_ids.at(0, 4, 0), Vocabulary::kPadId);
  for (std::size_t r = 0; r < 2; ++r) {
    std::int64_t total = 0;
    for (auto m : b.mask.row(r)) total += m;
    EXPECT_EQ(total, b.lengths[r]);
  }
}

TEST(Batching, MrcTargetsUseVirtualNullCoordinates) {
  const auto examples = toy_mrc_examples();
  const std::vector<std::vector<std::string>> corpora = {examples[0].passage_tokens};
  const Vocabulary words = build_vocab(corpora, 1), chars = build_char_vocab(corpora, 1);
  TextEncoder enc{&words, &chars};
  const auto batches = make_batches(examples, enc, 8, 3, true);
  EXPECT_EQ(batches.size(), 4u);
  for (const MRCBatch& b : batches) {
    for (std::size_t i = 0; i < b.example_indices.size(); ++i) {
      const MRCExample& ex = examples[b.example_indices[i]];
      if (ex.is_impossible) {
        EXPECT_EQ(b.span_start[i], 0);
        EXPECT_EQ(b.span_end[i], 0);
        EXPECT_EQ(b.no_answer[i], 1);
      } else {
        EXPECT_EQ(b.span_start[i], static_cast<std::int64_t>(*ex.answer_start_token) + 1);
        EXPECT_EQ(b.span_end[i], static_cast<std::int64_t>(*ex.answer_end_token) + 1);
      }
    }
  }
}

TEST(Batching, SluTargets) {
  const auto examples = toy_slu_examples(10, 2);
  std::vector<std::vector<std::string>> corpora;
  for (const auto& e : examples) corpora.push_back(e.tokens);
  const Vocabulary words = build_vocab(corpora, 1), chars = build_char_vocab(corpora, 1);
  const LabelSet intents = intent_labels(examples), slots = slot_labels(examples);
  TextEncoder enc{&words, &chars};
  const auto batches = make_batches(examples, enc, intents, slots, 4, 1, false);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[0].intent[1], intents.id(examples[1].intent));
  EXPECT_EQ(batches[0].slots.at(1, 0), slots.id(examples[1].slots[0]));
}

TEST(Synthetic, ToyCorporaShape) {
  const auto mrc = toy_mrc_examples();
  ASSERT_EQ(mrc.size(), 32u);
  std::size_t impossible = 0;
  std::vector<std::vector<std::string>> corpora;
  for (const auto& ex : mrc) {
    impossible += ex.is_impossible;
    EXPECT_LE(ex.passage_tokens.size(), 30u);
    corpora.push_back(ex.passage_tokens);
    corpora.push_back(ex.question_tokens);
  }
  EXPECT_EQ(impossible, 8u);
  EXPECT_LE(build_vocab(corpora, 1).size(), 100u);
  EXPECT_EQ(toy_slu_examples().size(), 32u);
}
