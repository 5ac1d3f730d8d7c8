#include "granenc/synthetic.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "granenc/rng.hpp"

namespace granenc {
namespace {

const std::vector<std::string> kThings = {"car",  "house", "bird", "apple", "door", "shirt", "boat", "cup",
                                          "lamp", "chair", "kite", "hat",   "ball", "bike",  "book", "fence"};
const std::vector<std::string> kColours = {"red",  "blue",  "green", "yellow",
                                           "black", "white", "pink",  "grey"};

template <typename T>
const T& pick(const std::vector<T>& items, Rng& rng) {
  return items[rng.below(items.size())];
}

}  // namespace

std::string toy_squad_json(const ToyMrcOptions& options) {
  Rng rng(options.seed);
  const auto unanswerable =
      static_cast<std::size_t>(std::llround(options.unanswerable_fraction * static_cast<double>(options.examples)));
  nlohmann::json paragraphs = nlohmann::json::array();
  for (std::size_t i = 0; i < options.examples; ++i) {
    std::vector<std::string> things = kThings;
    rng.shuffle(things);
    std::string context;
    std::vector<std::size_t> colour_at;
    std::vector<std::string> colours;
    for (std::size_t f = 0; f < options.facts_per_passage; ++f) {
      const std::string& colour = pick(kColours, rng);
      if (!context.empty()) context += ' ';
      context += "the " + things[f] + " is ";
      colour_at.push_back(context.size());
      colours.push_back(colour);
      context += colour + " .";
    }
    // Spread unanswerable questions evenly through the corpus.
    const bool impossible = unanswerable > 0 && (i * unanswerable) / options.examples !=
                                                    ((i + 1) * unanswerable) / options.examples;
    nlohmann::json qa;
    qa["id"] = "toy" + std::to_string(i);
    if (impossible) {
      qa["question"] = "what colour is the " + things[options.facts_per_passage + rng.below(4)] + " ?";
      qa["is_impossible"] = true;
      qa["answers"] = nlohmann::json::array();
    } else {
      const std::size_t f = rng.below(options.facts_per_passage);
      qa["question"] = "what colour is the " + things[f] + " ?";
      qa["is_impossible"] = false;
      qa["answers"] = nlohmann::json::array({{{"text", colours[f]}, {"answer_start", colour_at[f]}}});
    }
    paragraphs.push_back({{"context", context}, {"qas", nlohmann::json::array({qa})}});
  }
  nlohmann::json doc = {{"version", "v2.0"},
                        {"data", nlohmann::json::array({{{"title", "toy"}, {"paragraphs", paragraphs}}})}};
  return doc.dump();
}

std::vector<MRCExample> toy_mrc_examples(const ToyMrcOptions& options) {
  return parse_squad_text(toy_squad_json(options)).examples;
}

std::vector<SLUExample> toy_slu_examples(std::size_t count, std::uint64_t seed) {
  struct Template {
    std::string intent;
    std::vector<std::string> words;  // "$type" marks a slot filler
  };
  const std::vector<Template> templates = {
      {"PlayMusic", {"play", "$artist", "on", "$service"}},
      {"PlayMusic", {"put", "on", "some", "$artist"}},
      {"GetWeather", {"weather", "in", "$city", "$date"}},
      {"GetWeather", {"will", "it", "rain", "in", "$city"}},
      {"BookRestaurant", {"book", "a", "table", "for", "$party", "in", "$city"}},
      {"RateBook", {"rate", "this", "book", "$rating", "stars"}},
  };
  const std::map<std::string, std::vector<std::vector<std::string>>> fillers = {
      {"artist", {{"miles", "davis"}, {"adele"}, {"the", "beatles"}}},
      {"service", {{"spotify"}, {"deezer"}}},
      {"city", {{"paris"}, {"new", "york"}, {"lima"}}},
      {"date", {{"tomorrow"}, {"today"}}},
      {"party", {{"two"}, {"four"}}},
      {"rating", {{"five"}, {"three"}}},
  };
  Rng rng(seed);
  std::vector<SLUExample> out;
  for (std::size_t i = 0; i < count; ++i) {
    const Template& t = templates[i % templates.size()];
    SLUExample ex;
    ex.intent = t.intent;
    for (const std::string& w : t.words) {
      if (w[0] != '$') {
        ex.tokens.push_back(w);
        ex.slots.push_back("O");
        continue;
      }
      const std::string type = w.substr(1);
      const auto& filler = pick(fillers.at(type), rng);
      for (std::size_t k = 0; k < filler.size(); ++k) {
        ex.tokens.push_back(filler[k]);
        ex.slots.push_back((k == 0 ? "B-" : "I-") + type);
      }
    }
    out.push_back(std::move(ex));
  }
  return out;
}

TrainConfig toy_config() {
  TrainConfig c;
  c.epochs = 100;
  c.optimizer = "adam";
  c.lr = 0.01;
  c.batch_size_mrc = 32;
  c.batch_size_slu = 32;
  c.word_dim = 32;
  c.char_dim = 8;
  c.char_filters = 16;
  c.char_kernel = 3;
  c.lstm_hidden = 16;
  c.attn_dim = 32;
  c.decoder_hidden = 32;
  c.mrc_hidden = 16;
  c.max_answer_len = 5;
  return c;
}

}  // namespace granenc
