/*
 * Copyright 2026 The oodx Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oodx/errors.hpp"
#include "oodx/tensor.hpp"

// Minimal reverse-mode differentiation over dense double matrices. Nodes are
// appended in evaluation order, so walking them backwards is a valid
// topological order and each node is visited exactly once.
namespace oodx::ad {

using Index = Eigen::Index;

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, const Mat& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value) { return push(std::move(value), false, {}); }

  // Differentiable leaf. Its gradient is available after backward().
  Var parameter(Mat value) { return push(std::move(value), true, {}); }

  Var record(Mat value, std::initializer_list<Var> parents, Backprop backprop) {
    bool needs = false;
    for (const Var& p : parents) {
      if (p.tape != this) throw StateError("variable belongs to a different tape");
      needs = needs || nodes_[p.id].needsGrad;
    }
    return push(std::move(value), needs, needs ? std::move(backprop) : Backprop{});
  }

  const Mat& value(Var v) const { return nodes_.at(v.id).value; }

  // Gradient of the last backward() root with respect to v; zeros when v
  // does not influence the root.
  Mat grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool hasGrad(Var v) const { return nodes_.at(v.id).grad.size() != 0; }
  bool needsGrad(Var v) const { return nodes_.at(v.id).needsGrad; }
  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  void accumulate(Var v, const Mat& contribution) {
    Node& n = nodes_[v.id];
    if (!n.needsGrad) return;
    if (n.grad.size() == 0) {
      n.grad = contribution;
    } else {
      n.grad += contribution;
    }
  }

  void backward(Var root, double seed = 1.0) {
    if (consumed_) throw StateError("gradient tape was already consumed by backward()");
    if (root.tape != this) throw StateError("root belongs to a different tape");
    const Node& r = nodes_[root.id];
    if (r.value.rows() != 1 || r.value.cols() != 1) {
      throw ShapeError("backward() needs a scalar root");
    }
    consumed_ = true;
    nodes_[root.id].grad = Mat::Constant(1, 1, seed);
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backprop || n.grad.size() == 0) continue;
      Backprop fn = std::move(n.backprop);
      const Mat upstream = n.grad;
      fn(*this, upstream);
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needsGrad = false;
    Backprop backprop;
  };

  Var push(Mat value, bool needs_grad, Backprop backprop) {
    if (consumed_) throw StateError("cannot record on a consumed tape");
    nodes_.push_back(Node{std::move(value), Mat(), needs_grad, std::move(backprop)});
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

inline const Mat& val(Var v) { return v.tape->value(v); }

inline void requireSameShape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

inline Var matmul(Var a, Var b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  if (A.cols() != B.rows()) throw ShapeError("matmul: inner dimensions differ");
  return a.tape->record(A * B, {a, b}, [a, b](Tape& t, const Mat& g) {
    if (t.needsGrad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.needsGrad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

inline Var add(Var a, Var b) {
  requireSameShape(val(a), val(b), "add");
  return a.tape->record(val(a) + val(b), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

inline Var sub(Var a, Var b) {
  requireSameShape(val(a), val(b), "sub");
  return a.tape->record(val(a) - val(b), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

inline Var hadamard(Var a, Var b) {
  requireSameShape(val(a), val(b), "hadamard");
  return a.tape->record(val(a).cwiseProduct(val(b)), {a, b}, [a, b](Tape& t, const Mat& g) {
    if (t.needsGrad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
    if (t.needsGrad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

// a (n x k) plus a 1 x k row repeated over every row.
inline Var addRow(Var a, Var row) {
  const Mat& A = val(a);
  const Mat& R = val(row);
  if (R.rows() != 1 || R.cols() != A.cols()) throw ShapeError("addRow: bias shape mismatch");
  Mat out = A.rowwise() + R.row(0);
  return a.tape->record(std::move(out), {a, row}, [a, row](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    if (t.needsGrad(row)) t.accumulate(row, g.colwise().sum());
  });
}

inline Var scale(Var a, double s) {
  return a.tape->record(val(a) * s, {a}, [a, s](Tape& t, const Mat& g) { t.accumulate(a, g * s); });
}

inline Var addScalar(Var a, double s) {
  return a.tape->record(val(a).array() + s, {a}, [a](Tape& t, const Mat& g) { t.accumulate(a, g); });
}

inline Var relu(Var a) {
  Mat out = val(a).cwiseMax(0.0);
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Mat& g) {
    t.accumulate(a, (t.value(a).array() > 0.0).cast<double>().matrix().cwiseProduct(g));
  });
}

inline Var abs(Var a) {
  return a.tape->record(val(a).cwiseAbs(), {a}, [a](Tape& t, const Mat& g) {
    t.accumulate(a, t.value(a).array().sign().matrix().cwiseProduct(g));
  });
}

inline Var exp(Var a) {
  Mat out = val(a).array().exp().matrix();
  return a.tape->record(out, {a}, [a, out](Tape& t, const Mat& g) { t.accumulate(a, out.cwiseProduct(g)); });
}

inline Var square(Var a) {
  return a.tape->record(val(a).array().square().matrix(), {a}, [a](Tape& t, const Mat& g) {
    t.accumulate(a, 2.0 * t.value(a).cwiseProduct(g));
  });
}

inline Var sum(Var a) {
  Mat out = Mat::Constant(1, 1, val(a).sum());
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Mat& g) {
    const Mat& A = t.value(a);
    t.accumulate(a, Mat::Constant(A.rows(), A.cols(), g(0, 0)));
  });
}

inline Var mean(Var a) {
  const double n = static_cast<double>(val(a).size());
  if (n == 0) throw ShapeError("mean of an empty matrix");
  return scale(sum(a), 1.0 / n);
}

inline Var vstack(Var a, Var b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  if (A.cols() != B.cols()) throw ShapeError("vstack: column counts differ");
  Mat out(A.rows() + B.rows(), A.cols());
  out << A, B;
  const Index ra = A.rows();
  const Index rb = B.rows();
  return a.tape->record(std::move(out), {a, b}, [a, b, ra, rb](Tape& t, const Mat& g) {
    t.accumulate(a, g.topRows(ra));
    t.accumulate(b, g.bottomRows(rb));
  });
}

inline Var selectRows(Var a, std::vector<Index> rows) {
  const Mat& A = val(a);
  Mat out(static_cast<Index>(rows.size()), A.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= A.rows()) throw ShapeError("selectRows: index out of range");
    out.row(static_cast<Index>(i)) = A.row(rows[i]);
  }
  return a.tape->record(std::move(out), {a}, [a, rows = std::move(rows)](Tape& t, const Mat& g) {
    const Mat& A = t.value(a);
    Mat ga = Mat::Zero(A.rows(), A.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) ga.row(rows[i]) += g.row(static_cast<Index>(i));
    t.accumulate(a, ga);
  });
}

// Per-row max, n x k -> n x 1. Subgradient goes to the first maximiser.
inline Var rowMax(Var a) {
  const Mat& A = val(a);
  Mat out(A.rows(), 1);
  std::vector<Index> arg(static_cast<std::size_t>(A.rows()));
  for (Index r = 0; r < A.rows(); ++r) out(r, 0) = A.row(r).maxCoeff(&arg[static_cast<std::size_t>(r)]);
  return a.tape->record(std::move(out), {a}, [a, arg = std::move(arg)](Tape& t, const Mat& g) {
    const Mat& A = t.value(a);
    Mat ga = Mat::Zero(A.rows(), A.cols());
    for (Index r = 0; r < A.rows(); ++r) ga(r, arg[static_cast<std::size_t>(r)]) = g(r, 0);
    t.accumulate(a, ga);
  });
}

// Per-row log-sum-exp with the max shift, n x k -> n x 1.
inline Var rowLogSumExp(Var a) {
  const Mat& A = val(a);
  Mat out(A.rows(), 1);
  Mat weights(A.rows(), A.cols());
  for (Index r = 0; r < A.rows(); ++r) {
    const double mx = A.row(r).maxCoeff();
    const auto e = (A.row(r).array() - mx).exp();
    const double s = e.sum();
    out(r, 0) = mx + std::log(s);
    weights.row(r) = e / s;
  }
  return a.tape->record(std::move(out), {a}, [a, weights](Tape& t, const Mat& g) {
    t.accumulate(a, weights.array().colwise() * g.col(0).array());
  });
}

// out(r) = a(r, column[r]), n x k -> n x 1.
inline Var pickColumns(Var a, std::vector<Index> columns) {
  const Mat& A = val(a);
  if (static_cast<Index>(columns.size()) != A.rows()) throw ShapeError("pickColumns: size mismatch");
  Mat out(A.rows(), 1);
  for (Index r = 0; r < A.rows(); ++r) {
    const Index c = columns[static_cast<std::size_t>(r)];
    if (c < 0 || c >= A.cols()) throw ShapeError("pickColumns: column out of range");
    out(r, 0) = A(r, c);
  }
  return a.tape->record(std::move(out), {a}, [a, columns = std::move(columns)](Tape& t, const Mat& g) {
    const Mat& A = t.value(a);
    Mat ga = Mat::Zero(A.rows(), A.cols());
    for (Index r = 0; r < A.rows(); ++r) ga(r, columns[static_cast<std::size_t>(r)]) = g(r, 0);
    t.accumulate(a, ga);
  });
}

// Max over consecutive groups of `group` rows: (n*group) x k -> n x k.
inline Var maxPoolRows(Var a, Index group) {
  const Mat& A = val(a);
  if (group <= 0 || A.rows() % group != 0) throw ShapeError("maxPoolRows: rows not divisible by group");
  const Index n = A.rows() / group;
  Mat out(n, A.cols());
  std::vector<Index> arg(static_cast<std::size_t>(n * A.cols()));
  for (Index s = 0; s < n; ++s) {
    for (Index c = 0; c < A.cols(); ++c) {
      Index best = s * group;
      for (Index p = 1; p < group; ++p) {
        if (A(s * group + p, c) > A(best, c)) best = s * group + p;
      }
      out(s, c) = A(best, c);
      arg[static_cast<std::size_t>(s * A.cols() + c)] = best;
    }
  }
  return a.tape->record(std::move(out), {a}, [a, arg = std::move(arg), n](Tape& t, const Mat& g) {
    const Mat& A = t.value(a);
    Mat ga = Mat::Zero(A.rows(), A.cols());
    for (Index s = 0; s < n; ++s) {
      for (Index c = 0; c < A.cols(); ++c) ga(arg[static_cast<std::size_t>(s * A.cols() + c)], c) += g(s, c);
    }
    t.accumulate(a, ga);
  });
}

// alpha * log(sum_p exp(|a_p| / alpha)) over consecutive groups of `group`
// rows, evaluated with the max shift. (n*group) x k -> n x k.
inline Var smoothMaxAbsRows(Var a, Index group, double alpha) {
  const Mat& A = val(a);
  if (group <= 0 || A.rows() % group != 0) throw ShapeError("smoothMaxAbsRows: rows not divisible by group");
  if (!(alpha > 0.0)) throw ArgumentError("smooth max temperature must be positive");
  const Index n = A.rows() / group;
  Mat out(n, A.cols());
  Mat weights(A.rows(), A.cols());  // d out / d a, sign included
  for (Index s = 0; s < n; ++s) {
    for (Index c = 0; c < A.cols(); ++c) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Index p = 0; p < group; ++p) mx = std::max(mx, std::abs(A(s * group + p, c)));
      double total = 0.0;
      for (Index p = 0; p < group; ++p) {
        const double e = std::exp((std::abs(A(s * group + p, c)) - mx) / alpha);
        weights(s * group + p, c) = e;
        total += e;
      }
      out(s, c) = mx + alpha * std::log(total);
      for (Index p = 0; p < group; ++p) {
        const double x = A(s * group + p, c);
        const double sign = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
        weights(s * group + p, c) *= sign / total;
      }
    }
  }
  return a.tape->record(std::move(out), {a}, [a, weights, group, n](Tape& t, const Mat& g) {
    Mat ga(weights.rows(), weights.cols());
    for (Index s = 0; s < n; ++s) {
      for (Index p = 0; p < group; ++p) {
        ga.row(s * group + p) = weights.row(s * group + p).cwiseProduct(g.row(s));
      }
    }
    t.accumulate(a, ga);
  });
}

}  // namespace oodx::ad
