#pragma once

#include <functional>
#include <string>
#include <vector>

#include "aegis/graph.hpp"
#include "aegis/params.hpp"

namespace aegis {

struct GradCheckCase {
  std::string name;
  double max_rel_err = 0.0;
  bool ok = false;
};

// Compares the analytic gradient of a scalar-valued build against central
// differences for every element of every listed parameter. The build closure
// must construct its output from the parameters' current values. Relative
// error uses max(|analytic|, |numeric|, 1) in the denominator.
double grad_check(const std::function<Node*(Graph&)>& build, const std::vector<Parameter*>& params,
                  double h = 1e-5);

// Finite-difference coverage of every operator plus the composed blocks the
// network is made of. Shared by the CLI `gradcheck` command and the
// acceptance suite.
std::vector<GradCheckCase> gradient_suite(uint64_t seed, double tol = 1e-4);

}  // namespace aegis
