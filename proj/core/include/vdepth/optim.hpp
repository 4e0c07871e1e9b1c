#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vdepth/nn.hpp"

namespace vdepth::optim {

/// Adaptive-moment update; weight decay is added to the gradient (L2).
class Adam {
 public:
  struct Options {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
  };

  Adam(std::vector<Var<float>*> params, Options opts);

  void step();
  void set_lr(double lr) { opts_.lr = lr; }
  double lr() const { return opts_.lr; }
  std::int64_t steps() const { return t_; }

  // Optimizer state, exposed for checkpoints.
  std::vector<Tensor<float>>& first_moments() { return m_; }
  std::vector<Tensor<float>>& second_moments() { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  std::vector<Var<float>*> params_;
  Options opts_;
  std::vector<Tensor<float>> m_, v_;
  std::int64_t t_ = 0;
};

/// Stochastic gradient descent with heavy-ball momentum.
class Sgd {
 public:
  struct Options {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;
  };

  Sgd(std::vector<Var<float>*> params, Options opts);

  void step();
  void set_lr(double lr) { opts_.lr = lr; }
  double lr() const { return opts_.lr; }
  std::vector<Tensor<float>>& velocities() { return velocity_; }

 private:
  std::vector<Var<float>*> params_;
  Options opts_;
  std::vector<Tensor<float>> velocity_;
};

}  // namespace vdepth::optim
