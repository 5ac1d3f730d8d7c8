#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "granenc/config.hpp"
#include "granenc/datasets.hpp"

namespace granenc {

// Toy reading task: short passages of "the <thing> is <colour> ." facts and
// questions "what colour is the <thing> ?". Questions about things absent
// from the passage are unanswerable.
struct ToyMrcOptions {
  std::size_t examples = 32;
  double unanswerable_fraction = 0.25;
  std::size_t facts_per_passage = 4;
  std::uint64_t seed = 11;
};

// SQuAD 2.0 style JSON text for the toy reading task.
std::string toy_squad_json(const ToyMrcOptions& options = {});
std::vector<MRCExample> toy_mrc_examples(const ToyMrcOptions& options = {});

// Toy utterances drawn from a handful of intent templates with BIO slots.
std::vector<SLUExample> toy_slu_examples(std::size_t count = 32, std::uint64_t seed = 13);

// Small dimensions and an Adam schedule sized for the toy corpora.
TrainConfig toy_config();

}  // namespace granenc
