#include "vaest/optimizer.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>
#include <utility>

namespace vaest {

void AdamWConfig::validate() const {
  if (!(head_lr > 0.0) || !(backbone_lr > 0.0)) {
    throw std::invalid_argument("AdamWConfig: learning rates must be positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("AdamWConfig: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("AdamWConfig: eps must be positive");
  if (weight_decay < 0.0) {
    throw std::invalid_argument("AdamWConfig: weight_decay must be non-negative");
  }
}

AdamW::AdamW(AdamWConfig config) : config_(config) { config_.validate(); }

void AdamW::add_param(std::string name, TensorPtr param, ParamGroup group) {
  if (!param) throw std::invalid_argument("AdamW: null parameter '" + name + "'");
  if (!param->requires_grad()) {
    throw std::invalid_argument("AdamW: parameter '" + name + "' does not require grad");
  }
  for (const auto& s : slots_) {
    if (s.param == param) {
      throw std::invalid_argument("AdamW: parameter '" + name + "' already registered as '" +
                                  s.name + "'");
    }
  }
  Slot slot;
  slot.name = std::move(name);
  slot.param = std::move(param);
  slot.group = group;
  slot.m.assign(slot.param->data().size(), 0.0);
  slot.v.assign(slot.param->data().size(), 0.0);
  slots_.push_back(std::move(slot));
}

bool AdamW::step() {
  for (const auto& s : slots_) {
    if (!s.param->has_grad()) continue;
    for (double gv : s.param->grad()) {
      if (!std::isfinite(gv)) {
        ++skipped_;
        std::cerr << "adamw: non-finite gradient in '" << s.name << "', skipping step (skip #"
                  << skipped_ << ")\n";
        return false;
      }
    }
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (auto& s : slots_) {
    if (!s.param->has_grad()) continue;
    const double lr = s.group == ParamGroup::backbone ? config_.backbone_lr : config_.head_lr;
    const auto grad = s.param->grad();
    auto theta = s.param->mut_data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gv = grad[i];
      s.m[i] = config_.beta1 * s.m[i] + (1.0 - config_.beta1) * gv;
      s.v[i] = config_.beta2 * s.v[i] + (1.0 - config_.beta2) * gv * gv;
      const double m_hat = s.m[i] / bc1;
      const double v_hat = s.v[i] / bc2;
      theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + config_.eps) +
                        config_.weight_decay * theta[i]);
    }
  }
  return true;
}

void AdamW::zero_grad() {
  for (auto& s : slots_) s.param->zero_grad();
}

}  // namespace vaest
