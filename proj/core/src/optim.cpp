#include "vdepth/optim.hpp"

#include <cmath>

namespace vdepth::optim {

Adam::Adam(std::vector<Var<float>*> params, Options opts) : params_(std::move(params)), opts_(opts) {
  for (auto* p : params_) {
    m_.emplace_back(p->shape());
    v_.emplace_back(p->shape());
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<float>(opts_.beta1);
  const auto b2 = static_cast<float>(opts_.beta2);
  const auto step_size = static_cast<float>(opts_.lr / bc1);
  const auto inv_bc2 = static_cast<float>(1.0 / bc2);
  const auto eps = static_cast<float>(opts_.eps);
  const auto wd = static_cast<float>(opts_.weight_decay);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var<float>& p = *params_[i];
    if (p.grad().empty()) continue;
    float* w = p.mutable_value().data();
    const float* g = p.grad().data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    for (std::size_t j = 0; j < m_[i].size(); ++j) {
      const float gj = g[j] + wd * w[j];
      m[j] = b1 * m[j] + (1.0f - b1) * gj;
      v[j] = b2 * v[j] + (1.0f - b2) * gj * gj;
      w[j] -= step_size * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
    }
  }
}

Sgd::Sgd(std::vector<Var<float>*> params, Options opts) : params_(std::move(params)), opts_(opts) {
  for (auto* p : params_) velocity_.emplace_back(p->shape());
}

void Sgd::step() {
  const auto lr = static_cast<float>(opts_.lr);
  const auto mom = static_cast<float>(opts_.momentum);
  const auto wd = static_cast<float>(opts_.weight_decay);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var<float>& p = *params_[i];
    if (p.grad().empty()) continue;
    float* w = p.mutable_value().data();
    const float* g = p.grad().data();
    float* vel = velocity_[i].data();
    for (std::size_t j = 0; j < velocity_[i].size(); ++j) {
      vel[j] = mom * vel[j] + g[j] + wd * w[j];
      w[j] -= lr * vel[j];
    }
  }
}

}  // namespace vdepth::optim
