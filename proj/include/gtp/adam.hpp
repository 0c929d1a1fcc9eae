#pragma once

#include <cmath>
#include <vector>

#include "gtp/tape.hpp"

namespace gtp {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction over a fixed set of parameters. Moment tensors
/// mirror their parameters' shapes; the step counter advances by one per
/// step() call.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg = {})
      : cfg_(cfg) {
    slots_.reserve(params.size());
    for (Parameter* p : params) {
      slots_.push_back(Slot{p, Tensor(p->value.shape()), Tensor(p->value.shape())});
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Slot& s : slots_) {
      auto& val = s.p->value.vec();
      const auto& g = s.p->grad.vec();
      auto& m = s.m.vec();
      auto& v = s.v.vec();
      for (size_t i = 0; i < val.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        val[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  long step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  struct Slot {
    Parameter* p;
    Tensor m, v;
  };
  std::vector<Slot> slots_;
  AdamConfig cfg_;
  long t_ = 0;
};

inline double global_grad_norm(const std::vector<Parameter*>& params) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.vec()) sq += g * g;
  }
  return std::sqrt(sq);
}

/// Scale all gradients so their global L2 norm does not exceed max_norm.
inline void clip_global_norm(const std::vector<Parameter*>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm <= max_norm || norm == 0.0) return;
  const double s = max_norm / norm;
  for (Parameter* p : params) {
    for (double& g : p->grad.vec()) g *= s;
  }
}

}  // namespace gtp
