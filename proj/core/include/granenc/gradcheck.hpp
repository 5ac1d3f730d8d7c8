#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "granenc/autograd.hpp"

namespace granenc {

struct GradcheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
  std::size_t instance_size = 4;  // sequence length of the tiny instance
  // Test fixture: perturbs the analytic gradient of the named tensor.
  std::optional<std::string> corrupt;
};

struct GradcheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool pass = true;
};

struct GradcheckReport {
  std::string selector;
  std::vector<GradcheckEntry> entries;
  bool pass = true;

  const GradcheckEntry* first_failure() const;
  std::string to_string() const;
};

// |a - n| / max(|a|, |n|, 1e-6)
double relative_error(double analytic, double numeric);

// Forward builder for the harness: returns the outputs to be probed.
using GradcheckForward = std::function<std::vector<ag::Var>(ag::Graph&)>;

// Loss = sum_k sum(out_k * R_k) with fixed random R_k. Compares analytic
// gradients of every listed tensor with central finite differences.
GradcheckReport gradcheck_function(const std::string& selector, const std::vector<Parameter*>& params,
                                   const GradcheckForward& forward, const GradcheckOptions& options = {});

const std::vector<std::string>& gradcheck_selectors();

// Builds a seeded tiny instance of the named module and checks it.
// Throws ConfigError on an unknown selector.
GradcheckReport gradcheck(const std::string& selector, const GradcheckOptions& options = {});

}  // namespace granenc
