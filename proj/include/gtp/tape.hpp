#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gtp/error.hpp"
#include "gtp/tensor.hpp"

namespace gtp {

/// A named, trainable tensor. Gradients accumulate across backward passes
/// until the caller clears them (one optimizer step per batch).
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { std::fill(grad.vec().begin(), grad.vec().end(), 0.0); }
};

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Record of one forward computation: an ordered list of primitive
/// applications, each holding its output value and a closure that pushes
/// adjoints back to its inputs. Construction order is topological by
/// definition, so the backward sweep is a single reverse pass that visits
/// every node exactly once.
class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor adjoint;
    std::function<void(Tape&, int)> back;  // empty for leaves
  };

  const Tensor& val(Var v) const { return nodes_[v.id].value; }
  const Tensor& adj(Var v) const { return nodes_[v.id].adjoint; }
  size_t num_nodes() const { return nodes_.size(); }

  void reset() {
    nodes_.clear();
    bound_.clear();
    bound_ids_.clear();
  }

  Var constant(Tensor v) { return Var{push(std::move(v), {})}; }

  /// Leaf node bound to a parameter; after backward() the node's adjoint is
  /// added into the parameter's grad buffer. Binding the same parameter
  /// twice yields the same node.
  Var param(Parameter& p) {
    auto it = bound_ids_.find(&p);
    if (it != bound_ids_.end()) return Var{it->second};
    const int id = push(p.value, {});
    bound_ids_.emplace(&p, id);
    bound_.emplace_back(id, &p);
    return Var{id};
  }

  // ---- primitives -------------------------------------------------------

  Var matmul(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows()) {
      throw DimensionError("matmul: " + A.shape_str() + " x " + B.shape_str());
    }
    const int m = A.rows(), k = A.cols(), n = B.cols();
    Tensor C({m, n});
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int t = 0; t < k; ++t) acc += A.at(i, t) * B.at(t, j);
        C.at(i, j) = acc;
      }
    }
    const int ia = a.id, ib = b.id;
    return Var{push(std::move(C), [ia, ib, m, k, n](Tape& tp, int self) {
      const Tensor& dC = tp.nodes_[self].adjoint;
      const Tensor& A = tp.nodes_[ia].value;
      const Tensor& B = tp.nodes_[ib].value;
      Tensor& dA = tp.nodes_[ia].adjoint;
      Tensor& dB = tp.nodes_[ib].adjoint;
      for (int i = 0; i < m; ++i)
        for (int t = 0; t < k; ++t) {
          double acc = 0.0;
          for (int j = 0; j < n; ++j) acc += dC.at(i, j) * B.at(t, j);
          dA.at(i, t) += acc;
        }
      for (int t = 0; t < k; ++t)
        for (int j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int i = 0; i < m; ++i) acc += A.at(i, t) * dC.at(i, j);
          dB.at(t, j) += acc;
        }
    })};
  }

  Var add(Var a, Var b) { return binary_elem(a, b, "add", 0); }
  Var sub(Var a, Var b) { return binary_elem(a, b, "sub", 1); }
  Var mul(Var a, Var b) { return binary_elem(a, b, "mul", 2); }

  Var scale(Var a, double s) {
    Tensor y = val(a);
    for (double& x : y.vec()) x *= s;
    const int ia = a.id;
    return Var{push(std::move(y), [ia, s](Tape& tp, int self) {
      const auto& d = tp.nodes_[self].adjoint.vec();
      auto& da = tp.nodes_[ia].adjoint.vec();
      for (size_t i = 0; i < d.size(); ++i) da[i] += s * d[i];
    })};
  }

  Var one_minus(Var a) {
    Tensor y = val(a);
    for (double& x : y.vec()) x = 1.0 - x;
    const int ia = a.id;
    return Var{push(std::move(y), [ia](Tape& tp, int self) {
      const auto& d = tp.nodes_[self].adjoint.vec();
      auto& da = tp.nodes_[ia].adjoint.vec();
      for (size_t i = 0; i < d.size(); ++i) da[i] -= d[i];
    })};
  }

  Var sigmoid(Var a) {
    Tensor y = val(a);
    for (double& x : y.vec()) x = 1.0 / (1.0 + std::exp(-x));
    const int ia = a.id;
    return Var{push(std::move(y), [ia](Tape& tp, int self) {
      const auto& yv = tp.nodes_[self].value.vec();
      const auto& d = tp.nodes_[self].adjoint.vec();
      auto& da = tp.nodes_[ia].adjoint.vec();
      for (size_t i = 0; i < d.size(); ++i) da[i] += d[i] * yv[i] * (1.0 - yv[i]);
    })};
  }

  Var tanh_act(Var a) {
    Tensor y = val(a);
    for (double& x : y.vec()) x = std::tanh(x);
    const int ia = a.id;
    return Var{push(std::move(y), [ia](Tape& tp, int self) {
      const auto& yv = tp.nodes_[self].value.vec();
      const auto& d = tp.nodes_[self].adjoint.vec();
      auto& da = tp.nodes_[ia].adjoint.vec();
      for (size_t i = 0; i < d.size(); ++i) da[i] += d[i] * (1.0 - yv[i] * yv[i]);
    })};
  }

  /// Row-wise softmax, stabilized by max subtraction. Output rows lie on the
  /// probability simplex for any finite input.
  Var softmax(Var a) {
    const Tensor& X = val(a);
    if (X.size() == 0) throw ContractError("softmax on empty tensor");
    Tensor Y = X;
    const int r = Y.rows(), c = Y.cols();
    for (int i = 0; i < r; ++i) {
      double mx = Y.at(i, 0);
      for (int j = 1; j < c; ++j) mx = std::max(mx, Y.at(i, j));
      double sum = 0.0;
      for (int j = 0; j < c; ++j) {
        const double e = std::exp(Y.at(i, j) - mx);
        Y.at(i, j) = e;
        sum += e;
      }
      for (int j = 0; j < c; ++j) Y.at(i, j) /= sum;
    }
    const int ia = a.id;
    return Var{push(std::move(Y), [ia, r, c](Tape& tp, int self) {
      const Tensor& Yv = tp.nodes_[self].value;
      const Tensor& D = tp.nodes_[self].adjoint;
      Tensor& dA = tp.nodes_[ia].adjoint;
      for (int i = 0; i < r; ++i) {
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += D.at(i, j) * Yv.at(i, j);
        for (int j = 0; j < c; ++j) dA.at(i, j) += Yv.at(i, j) * (D.at(i, j) - dot);
      }
    })};
  }

  /// log(max(x, floor)); gradient is zero where the floor is active.
  Var log_floor(Var a, double floor) {
    Tensor y = val(a);
    for (double& x : y.vec()) x = std::log(x < floor ? floor : x);
    const int ia = a.id;
    return Var{push(std::move(y), [ia, floor](Tape& tp, int self) {
      const auto& xv = tp.nodes_[ia].value.vec();
      const auto& d = tp.nodes_[self].adjoint.vec();
      auto& da = tp.nodes_[ia].adjoint.vec();
      for (size_t i = 0; i < d.size(); ++i) {
        if (xv[i] >= floor) da[i] += d[i] / xv[i];
      }
    })};
  }

  /// Elementwise sqrt; forward is exact, backward clamps the denominator so
  /// a zero input yields a large finite gradient instead of Inf.
  Var sqrt_guard(Var a) {
    Tensor y = val(a);
    for (double& x : y.vec()) x = std::sqrt(x);
    const int ia = a.id;
    return Var{push(std::move(y), [ia](Tape& tp, int self) {
      const auto& yv = tp.nodes_[self].value.vec();
      const auto& d = tp.nodes_[self].adjoint.vec();
      auto& da = tp.nodes_[ia].adjoint.vec();
      for (size_t i = 0; i < d.size(); ++i) {
        const double denom = yv[i] < 1e-12 ? 1e-12 : yv[i];
        da[i] += d[i] / (2.0 * denom);
      }
    })};
  }

  Var sum(Var a) {
    double s = 0.0;
    for (double x : val(a).vec()) s += x;
    const int ia = a.id;
    return Var{push(Tensor({1, 1}, {s}), [ia](Tape& tp, int self) {
      const double d = tp.nodes_[self].adjoint[0];
      for (double& g : tp.nodes_[ia].adjoint.vec()) g += d;
    })};
  }

  Var mean(Var a) {
    const size_t n = val(a).size();
    if (n == 0) throw ContractError("mean of empty tensor");
    double s = 0.0;
    for (double x : val(a).vec()) s += x;
    const int ia = a.id;
    const double inv = 1.0 / static_cast<double>(n);
    return Var{push(Tensor({1, 1}, {s * inv}), [ia, inv](Tape& tp, int self) {
      const double d = tp.nodes_[self].adjoint[0] * inv;
      for (double& g : tp.nodes_[ia].adjoint.vec()) g += d;
    })};
  }

  /// Concatenate two row vectors: {1,m} ++ {1,n} -> {1,m+n}.
  Var concat_cols(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.rows() != 1 || B.rows() != 1) {
      throw DimensionError("concat_cols expects row vectors");
    }
    Tensor y({1, A.cols() + B.cols()});
    size_t k = 0;
    for (double x : A.vec()) y[k++] = x;
    for (double x : B.vec()) y[k++] = x;
    const int ia = a.id, ib = b.id;
    const size_t na = A.size();
    return Var{push(std::move(y), [ia, ib, na](Tape& tp, int self) {
      const auto& d = tp.nodes_[self].adjoint.vec();
      auto& da = tp.nodes_[ia].adjoint.vec();
      auto& db = tp.nodes_[ib].adjoint.vec();
      for (size_t i = 0; i < na; ++i) da[i] += d[i];
      for (size_t i = na; i < d.size(); ++i) db[i - na] += d[i];
    })};
  }

  /// Stack k row vectors {1,c} into a matrix {k,c}.
  Var stack_rows(const std::vector<Var>& rows_in) {
    if (rows_in.empty()) throw ContractError("stack_rows of nothing");
    const int c = val(rows_in[0]).cols();
    const int k = static_cast<int>(rows_in.size());
    Tensor y({k, c});
    std::vector<int> ids(rows_in.size());
    for (int i = 0; i < k; ++i) {
      const Tensor& r = val(rows_in[i]);
      if (r.rows() != 1 || r.cols() != c) throw DimensionError("stack_rows: ragged rows");
      for (int j = 0; j < c; ++j) y.at(i, j) = r[j];
      ids[i] = rows_in[i].id;
    }
    return Var{push(std::move(y), [ids, c](Tape& tp, int self) {
      const Tensor& d = tp.nodes_[self].adjoint;
      for (size_t i = 0; i < ids.size(); ++i) {
        auto& da = tp.nodes_[ids[i]].adjoint.vec();
        for (int j = 0; j < c; ++j) da[j] += d.at(static_cast<int>(i), j);
      }
    })};
  }

  /// Stack k scalars {1,1} into a row vector {1,k}.
  Var stack_scalars(const std::vector<Var>& xs) {
    if (xs.empty()) throw ContractError("stack_scalars of nothing");
    Tensor y({1, static_cast<int>(xs.size())});
    std::vector<int> ids(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) {
      const Tensor& s = val(xs[i]);
      if (s.size() != 1) throw DimensionError("stack_scalars expects scalars");
      y[i] = s[0];
      ids[i] = xs[i].id;
    }
    return Var{push(std::move(y), [ids](Tape& tp, int self) {
      const auto& d = tp.nodes_[self].adjoint.vec();
      for (size_t i = 0; i < ids.size(); ++i) tp.nodes_[ids[i]].adjoint[0] += d[i];
    })};
  }

  /// Extract row r of a matrix as a {1,c} vector.
  Var row(Var m, int r) {
    const Tensor& M = val(m);
    if (r < 0 || r >= M.rows()) throw DimensionError("row index out of range");
    const int c = M.cols();
    Tensor y({1, c});
    for (int j = 0; j < c; ++j) y[j] = M.at(r, j);
    const int im = m.id;
    return Var{push(std::move(y), [im, r, c](Tape& tp, int self) {
      const auto& d = tp.nodes_[self].adjoint.vec();
      Tensor& dm = tp.nodes_[im].adjoint;
      for (int j = 0; j < c; ++j) dm.at(r, j) += d[j];
    })};
  }

  /// Extract flat element i as a {1,1} scalar.
  Var pick(Var v, int i) {
    const Tensor& V = val(v);
    if (i < 0 || static_cast<size_t>(i) >= V.size()) {
      throw DimensionError("pick index out of range");
    }
    const int iv = v.id;
    return Var{push(Tensor({1, 1}, {V[i]}), [iv, i](Tape& tp, int self) {
      tp.nodes_[iv].adjoint[static_cast<size_t>(i)] += tp.nodes_[self].adjoint[0];
    })};
  }

  // ---- backward ---------------------------------------------------------

  /// Reverse sweep from a scalar loss. Node adjoints are recomputed from
  /// scratch, so replaying on the same record is bit-identical; adjoints of
  /// bound parameters are accumulated into their grad buffers at the end.
  void backward(Var loss) {
    if (!loss.valid()) throw ContractError("backward on invalid var");
    if (val(loss).size() != 1) {
      throw ContractError("backward requires a scalar loss, got shape " +
                          val(loss).shape_str());
    }
    for (Node& n : nodes_) {
      n.adjoint = Tensor(n.value.shape());
    }
    nodes_[loss.id].adjoint[0] = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      if (nodes_[i].back) nodes_[i].back(*this, i);
    }
    for (auto& [id, p] : bound_) {
      const auto& a = nodes_[id].adjoint.vec();
      auto& g = p->grad.vec();
      for (size_t i = 0; i < g.size(); ++i) g[i] += a[i];
    }
  }

  bool all_values_finite() const {
    for (const Node& n : nodes_) {
      if (!n.value.all_finite()) return false;
    }
    return true;
  }

 private:
  Var binary_elem(Var a, Var b, const char* what, int kind) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) {
      throw DimensionError(std::string(what) + ": shape mismatch " + A.shape_str() +
                           " vs " + B.shape_str());
    }
    Tensor y = A;
    const auto& bv = B.vec();
    for (size_t i = 0; i < y.size(); ++i) {
      if (kind == 0) y[i] = A[i] + bv[i];
      else if (kind == 1) y[i] = A[i] - bv[i];
      else y[i] = A[i] * bv[i];
    }
    const int ia = a.id, ib = b.id;
    std::function<void(Tape&, int)> back;
    if (kind == 0) {
      back = [ia, ib](Tape& tp, int self) {
        const auto& d = tp.nodes_[self].adjoint.vec();
        auto& da = tp.nodes_[ia].adjoint.vec();
        auto& db = tp.nodes_[ib].adjoint.vec();
        for (size_t i = 0; i < d.size(); ++i) {
          da[i] += d[i];
          db[i] += d[i];
        }
      };
    } else if (kind == 1) {
      back = [ia, ib](Tape& tp, int self) {
        const auto& d = tp.nodes_[self].adjoint.vec();
        auto& da = tp.nodes_[ia].adjoint.vec();
        auto& db = tp.nodes_[ib].adjoint.vec();
        for (size_t i = 0; i < d.size(); ++i) {
          da[i] += d[i];
          db[i] -= d[i];
        }
      };
    } else {
      back = [ia, ib](Tape& tp, int self) {
        const auto& d = tp.nodes_[self].adjoint.vec();
        const auto& av = tp.nodes_[ia].value.vec();
        const auto& bv2 = tp.nodes_[ib].value.vec();
        auto& da = tp.nodes_[ia].adjoint.vec();
        auto& db = tp.nodes_[ib].adjoint.vec();
        for (size_t i = 0; i < d.size(); ++i) {
          da[i] += d[i] * bv2[i];
          db[i] += d[i] * av[i];
        }
      };
    }
    return Var{push(std::move(y), std::move(back))};
  }

  int push(Tensor value, std::function<void(Tape&, int)> back) {
    nodes_.push_back(Node{std::move(value), Tensor(), std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<int, Parameter*>> bound_;
  std::unordered_map<const Parameter*, int> bound_ids_;
};

}  // namespace gtp
