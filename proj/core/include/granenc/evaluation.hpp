#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "granenc/datasets.hpp"

namespace granenc {

// Lowercase, drop punctuation, drop the articles a/an/the, collapse
// whitespace.
std::string normalize_answer(std::string_view s);

struct AnswerScore {
  int em;     // 0 or 1
  double f1;  // [0, 1]
};

// An empty gold list means the question is unanswerable.
AnswerScore em_f1(std::string_view prediction, const std::vector<std::string>& golds);

struct EvalReport {
  double em = 0.0;
  double f1 = 0.0;
  double has_ans_em = 0.0;
  double has_ans_f1 = 0.0;
  double no_ans_em = 0.0;
  double no_ans_f1 = 0.0;
  double intent_acc = 0.0;
  double slot_f1 = 0.0;
  std::size_t total = 0;
  std::size_t has_ans_count = 0;
  std::size_t no_ans_count = 0;
  std::size_t slu_count = 0;
};

struct SquadGold {
  std::string qid;
  std::vector<std::string> answers;  // empty for unanswerable
};

// Every answer text of every question, unanswerable questions with none.
std::vector<SquadGold> squad_golds(const std::vector<MRCExample>& examples);
std::vector<SquadGold> load_squad_golds(const std::filesystem::path& path);

// Percentages rounded to two decimals. Throws CoverageError naming missing ids.
EvalReport evaluate_squad(const std::map<std::string, std::string>& predictions, const std::vector<SquadGold>& golds);

// Chunk-level micro F1 in [0, 1] over exact (type, start, end) matches.
double slot_f1(const std::vector<std::vector<std::string>>& pred_tags,
               const std::vector<std::vector<std::string>>& gold_tags);

struct Chunk {
  std::string type;
  std::size_t start;
  std::size_t end;  // inclusive
  auto operator<=>(const Chunk&) const = default;
};
// Maximal B-X (I-X)* spans.
std::vector<Chunk> extract_chunks(const std::vector<std::string>& tags);

// Percentage of positions where the labels agree, two decimals.
double intent_accuracy(const std::vector<std::string>& predicted, const std::vector<std::string>& gold);

double round2(double v);

std::string report_to_json(const EvalReport& report);

}  // namespace granenc
