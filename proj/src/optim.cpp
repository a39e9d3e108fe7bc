#include "aegis/optim.hpp"

#include <cmath>

namespace aegis {

SgdOptimizer::SgdOptimizer(std::vector<Parameter*> params, double lr, double momentum, double weight_decay,
                           double lr_decay_per_epoch)
    : params_(std::move(params)), lr_(lr), momentum_(momentum), weight_decay_(weight_decay),
      lr_decay_(lr_decay_per_epoch) {
  velocity_.reserve(params_.size());
  for (Parameter* p : params_) velocity_.emplace_back(p->value.shape);
}

void SgdOptimizer::step() {
  for (size_t k = 0; k < params_.size(); ++k) {
    Parameter* p = params_[k];
    if (!p->trainable) continue;
    Tensor& vel = velocity_[k];
    for (int64_t i = 0; i < p->value.numel(); ++i) {
      vel[i] = momentum_ * vel[i] + p->grad[i];
      p->value[i] -= lr_ * (vel[i] + weight_decay_ * p->value[i]);
    }
  }
}

AdamOptimizer::AdamOptimizer(std::vector<Parameter*> params, double lr, double beta1, double beta2,
                             double eps, double weight_decay, double lr_decay_per_epoch)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
      weight_decay_(weight_decay), lr_decay_(lr_decay_per_epoch) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.shape);
    v_.emplace_back(p->value.shape);
  }
}

void AdamOptimizer::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t k = 0; k < params_.size(); ++k) {
    Parameter* p = params_[k];
    if (!p->trainable) continue;
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (int64_t i = 0; i < p->value.numel(); ++i) {
      double g = p->grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p->value[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * p->value[i]);
    }
  }
}

}  // namespace aegis
