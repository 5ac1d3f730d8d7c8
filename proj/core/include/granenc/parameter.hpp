#pragma once

#include <optional>
#include <string>

#include "granenc/rng.hpp"
#include "granenc/tensor.hpp"

namespace granenc {

// A named trainable tensor together with its accumulated gradient.
struct Parameter {
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
  // Row that stays identically zero and never receives gradient (PAD rows of
  // embedding tables).
  std::optional<std::size_t> frozen_row;

  void zero_grad() { grad.fill(0.0); }
  void init_uniform(Rng& rng, double lo, double hi);
  void clear_frozen_row();
};

}  // namespace granenc
