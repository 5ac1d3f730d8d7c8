#include "granenc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "granenc/unicode.hpp"

namespace granenc {

namespace {

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (const auto& cp : unicode::decode(s)) {
    if (unicode::is_whitespace(cp.value)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.append(s.substr(cp.byte_begin, cp.byte_end - cp.byte_begin));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool is_article(std::u32string_view w) { return w == U"a" || w == U"an" || w == U"the"; }

}  // namespace

std::string normalize_answer(std::string_view s) {
  // lowercase and strip punctuation
  std::u32string text;
  for (const auto& cp : unicode::decode(s)) {
    const char32_t c = unicode::to_lower(cp.value);
    if (!unicode::is_punctuation(c)) text.push_back(c);
  }
  // remove articles delimited by word boundaries
  std::u32string kept;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!unicode::is_word_char(text[i])) {
      kept.push_back(text[i++]);
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && unicode::is_word_char(text[j])) ++j;
    const std::u32string_view word(text.data() + i, j - i);
    if (!is_article(word)) kept.append(word);
    i = j;
  }
  std::string utf8;
  for (char32_t c : kept) unicode::append_utf8(utf8, c);
  const auto words = split_whitespace(utf8);
  std::string out;
  for (std::size_t k = 0; k < words.size(); ++k) {
    if (k) out += ' ';
    out += words[k];
  }
  return out;
}

namespace {

double token_f1(const std::string& pred_norm, const std::string& gold_norm) {
  const auto p = split_whitespace(pred_norm);
  const auto g = split_whitespace(gold_norm);
  if (p.empty() || g.empty()) return p == g ? 1.0 : 0.0;
  std::map<std::string, int> counts;
  for (const auto& w : g) ++counts[w];
  int common = 0;
  for (const auto& w : p) {
    auto it = counts.find(w);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

// Gold answers that survive normalisation; none means unanswerable.
std::vector<std::string> effective_golds(const std::vector<std::string>& golds) {
  std::vector<std::string> out;
  for (const auto& g : golds) {
    std::string n = normalize_answer(g);
    if (!n.empty()) out.push_back(std::move(n));
  }
  return out;
}

}  // namespace

AnswerScore em_f1(std::string_view prediction, const std::vector<std::string>& golds) {
  const std::string pred = normalize_answer(prediction);
  const auto gold_norm = effective_golds(golds);
  if (gold_norm.empty()) {
    const int ok = pred.empty() ? 1 : 0;
    return {ok, static_cast<double>(ok)};
  }
  AnswerScore best{0, 0.0};
  for (const auto& g : gold_norm) {
    best.em = std::max(best.em, pred == g ? 1 : 0);
    best.f1 = std::max(best.f1, token_f1(pred, g));
  }
  return best;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

std::vector<SquadGold> squad_golds(const std::vector<MRCExample>& examples) {
  std::vector<SquadGold> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back({ex.qid, ex.is_impossible ? std::vector<std::string>{} : ex.gold_answers});
  return out;
}

std::vector<SquadGold> load_squad_golds(const std::filesystem::path& path) {
  SquadOptions options;
  options.keep_unaligned = true;
  options.max_passage_tokens = std::numeric_limits<std::size_t>::max();
  return squad_golds(parse_squad(path, options).examples);
}

EvalReport evaluate_squad(const std::map<std::string, std::string>& predictions, const std::vector<SquadGold>& golds) {
  std::vector<std::string> missing;
  for (const auto& g : golds)
    if (!predictions.count(g.qid)) missing.push_back(g.qid);
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " question(s) have no prediction:";
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg += " " + missing[i];
    if (missing.size() > 10) msg += " ...";
    throw CoverageError(msg);
  }
  EvalReport r;
  double em = 0, f1 = 0, has_em = 0, has_f1 = 0, no_em = 0, no_f1 = 0;
  for (const auto& g : golds) {
    const AnswerScore s = em_f1(predictions.at(g.qid), g.answers);
    em += s.em;
    f1 += s.f1;
    if (effective_golds(g.answers).empty()) {
      ++r.no_ans_count;
      no_em += s.em;
      no_f1 += s.f1;
    } else {
      ++r.has_ans_count;
      has_em += s.em;
      has_f1 += s.f1;
    }
  }
  r.total = golds.size();
  auto pct = [](double v, std::size_t n) { return n ? round2(100.0 * v / static_cast<double>(n)) : 0.0; };
  r.em = pct(em, r.total);
  r.f1 = pct(f1, r.total);
  r.has_ans_em = pct(has_em, r.has_ans_count);
  r.has_ans_f1 = pct(has_f1, r.has_ans_count);
  r.no_ans_em = pct(no_em, r.no_ans_count);
  r.no_ans_f1 = pct(no_f1, r.no_ans_count);
  return r;
}

std::vector<Chunk> extract_chunks(const std::vector<std::string>& tags) {
  std::vector<Chunk> out;
  std::size_t i = 0;
  while (i < tags.size()) {
    if (tags[i].size() > 2 && tags[i][0] == 'B' && tags[i][1] == '-') {
      const std::string type = tags[i].substr(2);
      std::size_t j = i + 1;
      while (j < tags.size() && tags[j] == "I-" + type) ++j;
      out.push_back({type, i, j - 1});
      i = j;
    } else {
      ++i;
    }
  }
  return out;
}

double slot_f1(const std::vector<std::vector<std::string>>& pred_tags,
               const std::vector<std::vector<std::string>>& gold_tags) {
  if (pred_tags.size() != gold_tags.size()) {
    throw AlignmentError("slot_f1: " + std::to_string(pred_tags.size()) + " predicted vs " +
                         std::to_string(gold_tags.size()) + " gold sequences");
  }
  std::size_t tp = 0, npred = 0, ngold = 0;
  for (std::size_t i = 0; i < pred_tags.size(); ++i) {
    if (pred_tags[i].size() != gold_tags[i].size()) {
      throw AlignmentError("slot_f1: sequence " + std::to_string(i) + " has " + std::to_string(pred_tags[i].size()) +
                           " predicted and " + std::to_string(gold_tags[i].size()) + " gold tags");
    }
    auto p = extract_chunks(pred_tags[i]);
    auto g = extract_chunks(gold_tags[i]);
    std::sort(p.begin(), p.end());
    std::sort(g.begin(), g.end());
    std::vector<Chunk> common;
    std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(common));
    tp += common.size();
    npred += p.size();
    ngold += g.size();
  }
  if (npred == 0 && ngold == 0) return 1.0;
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(npred);
  const double recall = static_cast<double>(tp) / static_cast<double>(ngold);
  return 2.0 * precision * recall / (precision + recall);
}

double intent_accuracy(const std::vector<std::string>& predicted, const std::vector<std::string>& gold) {
  if (predicted.size() != gold.size()) throw AlignmentError("intent_accuracy: length mismatch");
  if (gold.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hit += predicted[i] == gold[i];
  return round2(100.0 * static_cast<double>(hit) / static_cast<double>(gold.size()));
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["exact"] = r.em;
  j["f1"] = r.f1;
  j["total"] = r.total;
  j["HasAns_exact"] = r.has_ans_em;
  j["HasAns_f1"] = r.has_ans_f1;
  j["HasAns_total"] = r.has_ans_count;
  j["NoAns_exact"] = r.no_ans_em;
  j["NoAns_f1"] = r.no_ans_f1;
  j["NoAns_total"] = r.no_ans_count;
  if (r.slu_count > 0) {
    j["intent_acc"] = r.intent_acc;
    j["slot_f1"] = r.slot_f1;
    j["slu_total"] = r.slu_count;
  }
  return j.dump(2);
}

}  // namespace granenc
