#include "granenc/parameter.hpp"

namespace granenc {

Parameter::Parameter(std::string name_in, Tensor value_in)
    : name(std::move(name_in)), value(std::move(value_in)), grad(value.shape(), 0.0) {}

void Parameter::init_uniform(Rng& rng, double lo, double hi) {
  for (double& v : value.storage()) v = rng.uniform(lo, hi);
  clear_frozen_row();
}

void Parameter::clear_frozen_row() {
  if (!frozen_row) return;
  for (double& v : value.row(*frozen_row)) v = 0.0;
  for (double& v : grad.row(*frozen_row)) v = 0.0;
}

}  // namespace granenc
