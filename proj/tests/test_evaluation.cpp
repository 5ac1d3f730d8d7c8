#include <gtest/gtest.h>

#include "granenc/evaluation.hpp"

using namespace granenc;

TEST(Normalize, LowercasesAndStripsPunctuationAndArticles) {
  EXPECT_EQ(normalize_answer("The Cat!"), "cat");
  EXPECT_EQ(normalize_answer("a  an the"), "");
  EXPECT_EQ(normalize_answer("  Denver   Broncos. "), "denver broncos");
  EXPECT_EQ(normalize_answer("theater"), "theater");
}

TEST(Normalize, Idempotent) {
  for (const char* s : {"The Cat!", "Hello,  World", "\xe2\x80\x9cquoted\xe2\x80\x9d", "an apple"}) {
    const std::string once = normalize_answer(s);
    EXPECT_EQ(normalize_answer(once), once);
  }
}

TEST(EmF1, PartialOverlap) {
  const AnswerScore s = em_f1("the Broncos", {"Denver Broncos"});
  EXPECT_EQ(s.em, 0);
  EXPECT_NEAR(s.f1, 2.0 / 3.0, 1e-12);
}

TEST(EmF1, MaxOverGoldsAndSymmetry) {
  const AnswerScore s = em_f1("Broncos", {"Panthers", "the Broncos"});
  EXPECT_EQ(s.em, 1);
  EXPECT_DOUBLE_EQ(s.f1, 1.0);
  EXPECT_DOUBLE_EQ(em_f1("a b c", {"b c d"}).f1, em_f1("b c d", {"a b c"}).f1);
}

TEST(EmF1, Unanswerable) {
  const AnswerScore both_empty = em_f1("", {});
  EXPECT_EQ(both_empty.em, 1);
  EXPECT_DOUBLE_EQ(both_empty.f1, 1.0);
  const AnswerScore wrong = em_f1("something", {});
  EXPECT_EQ(wrong.em, 0);
  EXPECT_DOUBLE_EQ(wrong.f1, 0.0);
  EXPECT_DOUBLE_EQ(em_f1("", {"Denver"}).f1, 0.0);
}

TEST(EvaluateSquad, PerfectHalfAndPartial) {
  const std::vector<SquadGold> golds = {{"a", {"Denver Broncos"}}, {"b", {}}};
  const EvalReport perfect = evaluate_squad({{"a", "Denver Broncos"}, {"b", ""}}, golds);
  EXPECT_DOUBLE_EQ(perfect.em, 100.0);
  EXPECT_DOUBLE_EQ(perfect.f1, 100.0);
  EXPECT_EQ(perfect.has_ans_count, 1u);
  EXPECT_EQ(perfect.no_ans_count, 1u);
  const EvalReport half = evaluate_squad({{"a", "Denver Broncos"}, {"b", "x"}}, golds);
  EXPECT_DOUBLE_EQ(half.em, 50.0);
  EXPECT_DOUBLE_EQ(half.no_ans_em, 0.0);
  EXPECT_DOUBLE_EQ(half.has_ans_em, 100.0);
  const std::vector<SquadGold> three = {{"a", {"Denver Broncos"}}, {"b", {}}, {"c", {"x y z"}}};
  const EvalReport partial = evaluate_squad({{"a", "the Broncos"}, {"b", ""}, {"c", "x y z"}}, three);
  EXPECT_DOUBLE_EQ(partial.em, 66.67);
  EXPECT_DOUBLE_EQ(partial.f1, 88.89);
  const EvalReport mixed = evaluate_squad({{"a", "the Broncos"}, {"b", "x"}}, golds);
  EXPECT_DOUBLE_EQ(mixed.f1, round2(100.0 * (2.0 / 3.0) / 2.0));
}

TEST(EvaluateSquad, WorkedExampleFiftyFiveFiftySix) {
  // EM 1/3 with F1 (1 + 2/3 + 0) / 3 gives 55.56.
  const std::vector<SquadGold> golds = {{"q1", {"Denver Broncos"}}, {"q2", {"Denver Broncos"}}, {"q3", {}}};
  const EvalReport r = evaluate_squad({{"q1", "Denver Broncos"}, {"q2", "the Broncos"}, {"q3", "Carolina"}}, golds);
  EXPECT_DOUBLE_EQ(r.em, 33.33);
  EXPECT_DOUBLE_EQ(r.f1, 55.56);
}

TEST(EvaluateSquad, MissingIdIsACoverageError) {
  const std::vector<SquadGold> golds = {{"a", {"x"}}, {"missing_q", {}}};
  try {
    evaluate_squad({{"a", "x"}}, golds);
    FAIL() << "expected CoverageError";
  } catch (const CoverageError& e) {
    EXPECT_NE(std::string(e.what()).find("missing_q"), std::string::npos);
  }
}

TEST(SlotF1, ChunkLevel) {
  EXPECT_DOUBLE_EQ(slot_f1({{"B-a", "I-a", "O"}}, {{"B-a", "O", "O"}}), 0.0);
  // Gold has two chunks, prediction finds one exactly: P=1, R=1/2.
  EXPECT_NEAR(slot_f1({{"B-a", "O", "O"}}, {{"B-a", "O", "B-b"}}), 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(slot_f1({{"O", "B-x", "I-x"}}, {{"O", "B-x", "I-x"}}), 1.0);
  const std::vector<std::vector<std::string>> p = {{"B-a", "B-b", "O"}}, g = {{"B-a", "O", "B-c"}};
  EXPECT_DOUBLE_EQ(slot_f1(p, g), slot_f1(g, p));
}

TEST(SlotF1, Chunks) {
  const auto chunks = extract_chunks({"B-a", "I-a", "O", "B-b", "B-b", "I-b"});
  ASSERT_EQ(chunks.size(), 3u);
  EXPECT_EQ(chunks[0], (Chunk{"a", 0, 1}));
  EXPECT_EQ(chunks[1], (Chunk{"b", 3, 3}));
  EXPECT_EQ(chunks[2], (Chunk{"b", 4, 5}));
}

TEST(IntentAccuracy, Percent) {
  EXPECT_DOUBLE_EQ(intent_accuracy({"a", "b", "c"}, {"a", "b", "x"}), 66.67);
  EXPECT_DOUBLE_EQ(intent_accuracy({"a"}, {"a"}), 100.0);
}

TEST(ReportJson, HasHeadlineKeys) {
  EvalReport r;
  r.em = 12.5;
  const std::string j = report_to_json(r);
  for (const char* key : {"\"exact\"", "\"f1\"", "\"HasAns_exact\"", "\"NoAns_exact\""})
    EXPECT_NE(j.find(key), std::string::npos) << key;
}
