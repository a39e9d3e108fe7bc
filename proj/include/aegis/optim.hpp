#pragma once

#include <unordered_map>
#include <vector>

#include "aegis/params.hpp"

namespace aegis {

// Both optimizers apply decoupled weight decay (decay acts on the value
// directly, not through the gradient) and multiply the learning rate by a
// fixed factor at the end of every epoch.
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<Parameter*> params, double lr, double momentum, double weight_decay,
               double lr_decay_per_epoch);

  void step();
  void end_epoch() { lr_ *= lr_decay_; }
  double lr() const { return lr_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> velocity_;
  double lr_, momentum_, weight_decay_, lr_decay_;
};

class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Parameter*> params, double lr, double beta1, double beta2, double eps,
                double weight_decay, double lr_decay_per_epoch);

  void step();
  void end_epoch() { lr_ *= lr_decay_; }
  double lr() const { return lr_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_, weight_decay_, lr_decay_;
  int64_t t_ = 0;
};

}  // namespace aegis
