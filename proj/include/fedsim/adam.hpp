#pragma once

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/common.hpp"
#include "fedsim/matrix.hpp"

namespace fedsim {

// First/second moment buffers for one parameter tensor.
struct AdamState {
  Matrix m, v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void reset() {
    m.fill(0.0);
    v.fill(0.0);
    step = 0;
  }
};

// One bias-corrected update over a flat view of the parameter. The moment
// buffers must already have the same element count as the value.
inline void adam_step(std::span<double> value, std::span<const double> grad, AdamState& st,
                      double lr) {
  if (!(lr > 0.0)) throw StructuralError("adam_step: lr must be > 0");
  if (value.size() != grad.size()) throw StructuralError("adam_step: gradient size mismatch");
  if (st.m.a.size() != value.size() || st.v.a.size() != value.size())
    throw StructuralError("adam_step: moment buffers do not match value size");
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (size_t i = 0; i < value.size(); ++i) {
    const double g = grad[i];
    st.m.a[i] = st.beta1 * st.m.a[i] + (1.0 - st.beta1) * g;
    st.v.a[i] = st.beta2 * st.v.a[i] + (1.0 - st.beta2) * g * g;
    const double mhat = st.m.a[i] / c1;
    const double vhat = st.v.a[i] / c2;
    value[i] -= lr * mhat / (std::sqrt(vhat) + st.epsilon);
  }
}

inline AdamState make_adam_state(int rows, int cols) {
  AdamState st;
  st.m = zeros(rows, cols);
  st.v = zeros(rows, cols);
  return st;
}

// Named parameter collection with per-entry optimizer state. Entry order is
// insertion order and is part of the contract: iteration, serialization and
// gradient application all follow it.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Matrix value;
    AdamState adam;
  };

  void add(const std::string& name, Matrix value) {
    if (find(name)) throw StructuralError("ParamSet: duplicate parameter '" + name + "'");
    Entry e;
    e.name = name;
    e.adam = make_adam_state(value.rows, value.cols);
    e.value = std::move(value);
    entries_.push_back(std::move(e));
  }

  const Entry* find(const std::string& name) const {
    for (const Entry& e : entries_)
      if (e.name == name) return &e;
    return nullptr;
  }

  Entry* find(const std::string& name) {
    for (Entry& e : entries_)
      if (e.name == name) return &e;
    return nullptr;
  }

  const Matrix& at(const std::string& name) const {
    const Entry* e = find(name);
    if (!e) throw StructuralError("ParamSet: unknown parameter '" + name + "'");
    return e->value;
  }

  Matrix& at(const std::string& name) {
    Entry* e = find(name);
    if (!e) throw StructuralError("ParamSet: unknown parameter '" + name + "'");
    return e->value;
  }

  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Entry& entry(size_t i) const { return entries_[i]; }
  Entry& entry(size_t i) { return entries_[i]; }

  void reset_adam() {
    for (Entry& e : entries_) e.adam.reset();
  }

 private:
  std::vector<Entry> entries_;
};

// Gradients addressed by parameter name. A name may appear at most once.
using GradMap = std::vector<std::pair<std::string, Matrix>>;

inline const Matrix* grad_for(const GradMap& grads, const std::string& name) {
  for (const auto& [n, g] : grads)
    if (n == name) return &g;
  return nullptr;
}

// Steps every entry once. Entries without a gradient step with a zero
// gradient so their moment buffers keep decaying in lockstep. Gradient
// names that match no parameter are an error.
inline void adam_step(ParamSet& params, const GradMap& grads, double lr) {
  if (!(lr > 0.0)) throw StructuralError("adam_step: lr must be > 0");
  for (const auto& [name, g] : grads) {
    const ParamSet::Entry* e = params.find(name);
    if (!e) throw StructuralError("adam_step: gradient for unknown parameter '" + name + "'");
    check_same_shape(e->value, g, "gradient for " + name);
  }
  for (size_t i = 0; i < params.size(); ++i) {
    ParamSet::Entry& e = params.entry(i);
    const Matrix* g = grad_for(grads, e.name);
    if (g) {
      adam_step(std::span<double>(e.value.a), std::span<const double>(g->a), e.adam, lr);
    } else {
      std::vector<double> zero(e.value.a.size(), 0.0);
      adam_step(std::span<double>(e.value.a), std::span<const double>(zero), e.adam, lr);
    }
  }
}

// Plain gradient-descent step over named parameters, same lookup rules.
inline void sgd_step(ParamSet& params, const GradMap& grads, double lr) {
  if (!(lr > 0.0)) throw StructuralError("sgd_step: lr must be > 0");
  for (const auto& [name, g] : grads) {
    ParamSet::Entry* e = params.find(name);
    if (!e) throw StructuralError("sgd_step: gradient for unknown parameter '" + name + "'");
    check_same_shape(e->value, g, "gradient for " + name);
    for (size_t i = 0; i < e->value.a.size(); ++i) e->value.a[i] -= lr * g.a[i];
  }
}

}  // namespace fedsim
