#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "gtp/rng.hpp"
#include "gtp/tape.hpp"

namespace gtp {

/// Owns parameters in registration order. Registration order is the
/// initialization order, so a fixed seed reproduces identical weights.
class ParamSet {
 public:
  Parameter& create(const std::string& name, std::vector<int> shape) {
    if (by_name_.count(name)) throw ContractError("duplicate parameter: " + name);
    items_.push_back(std::make_unique<Parameter>(name, Tensor(std::move(shape))));
    by_name_[name] = items_.back().get();
    return *items_.back();
  }

  Parameter* find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
  }

  Parameter& at(const std::string& name) const {
    Parameter* p = find(name);
    if (!p) throw ContractError("unknown parameter: " + name);
    return *p;
  }

  std::vector<Parameter*> all() const {
    std::vector<Parameter*> out;
    out.reserve(items_.size());
    for (const auto& p : items_) out.push_back(p.get());
    return out;
  }

  size_t count() const { return items_.size(); }

  size_t total_values() const {
    size_t n = 0;
    for (const auto& p : items_) n += p->value.size();
    return n;
  }

  void zero_grads() {
    for (const auto& p : items_) p->zero_grad();
  }

  bool all_finite() const {
    for (const auto& p : items_) {
      if (!p->value.all_finite()) return false;
    }
    return true;
  }

 private:
  std::vector<std::unique_ptr<Parameter>> items_;
  std::unordered_map<std::string, Parameter*> by_name_;
};

/// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
inline void init_uniform(Parameter& p, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& x : p.value.vec()) x = rng.uniform(-bound, bound);
}

/// One dense layer y = x W + b with x as a {1,in} row vector.
struct Dense {
  Parameter* W = nullptr;
  Parameter* b = nullptr;
  int in = 0, out = 0;

  static Dense create(ParamSet& ps, const std::string& prefix, int in, int out, Rng& rng) {
    Dense d;
    d.in = in;
    d.out = out;
    d.W = &ps.create(prefix + ".W", {in, out});
    d.b = &ps.create(prefix + ".b", {1, out});
    init_uniform(*d.W, in, rng);
    return d;
  }

  Var operator()(Tape& t, Var x) const {
    return t.add(t.matmul(x, t.param(*W)), t.param(*b));
  }
};

/// GRU cell weights. Input-to-hidden W* are {dx,dh}, hidden-to-hidden U* are
/// {dh,dh}, biases {1,dh}.
struct GruCell {
  Parameter *Wz = nullptr, *Uz = nullptr, *bz = nullptr;
  Parameter *Wr = nullptr, *Ur = nullptr, *br = nullptr;
  Parameter *Wh = nullptr, *Uh = nullptr, *bh = nullptr;
  int dx = 0, dh = 0;

  static GruCell create(ParamSet& ps, const std::string& prefix, int dx, int dh, Rng& rng) {
    GruCell g;
    g.dx = dx;
    g.dh = dh;
    auto mk = [&](const char* n, int r, int c, int fan) {
      Parameter& p = ps.create(prefix + "." + n, {r, c});
      if (fan > 0) init_uniform(p, fan, rng);
      return &p;
    };
    g.Wz = mk("Wz", dx, dh, dx);
    g.Uz = mk("Uz", dh, dh, dh);
    g.bz = mk("bz", 1, dh, 0);
    g.Wr = mk("Wr", dx, dh, dx);
    g.Ur = mk("Ur", dh, dh, dh);
    g.br = mk("br", 1, dh, 0);
    g.Wh = mk("Wh", dx, dh, dx);
    g.Uh = mk("Uh", dh, dh, dh);
    g.bh = mk("bh", 1, dh, 0);
    return g;
  }
};

/// One GRU step:
///   z = sigmoid(x Wz + h Uz + bz)
///   r = sigmoid(x Wr + h Ur + br)
///   hc = tanh(x Wh + (r*h) Uh + bh)
///   h' = (1-z)*h + z*hc
inline Var gru_cell(Tape& t, Var h_prev, Var x, const GruCell& w) {
  if (t.val(x).cols() != w.dx || t.val(h_prev).cols() != w.dh) {
    throw DimensionError("gru_cell: input/state sizes do not match weights");
  }
  Var z = t.sigmoid(t.add(t.add(t.matmul(x, t.param(*w.Wz)), t.matmul(h_prev, t.param(*w.Uz))),
                          t.param(*w.bz)));
  Var r = t.sigmoid(t.add(t.add(t.matmul(x, t.param(*w.Wr)), t.matmul(h_prev, t.param(*w.Ur))),
                          t.param(*w.br)));
  Var hc = t.tanh_act(t.add(
      t.add(t.matmul(x, t.param(*w.Wh)), t.matmul(t.mul(r, h_prev), t.param(*w.Uh))),
      t.param(*w.bh)));
  return t.add(t.mul(t.one_minus(z), h_prev), t.mul(z, hc));
}

}  // namespace gtp
