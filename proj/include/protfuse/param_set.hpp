#pragma once

#include "protfuse/autograd.hpp"
#include "protfuse/types.hpp"

#include <cmath>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace protfuse {

/// Named dense arrays kept in declaration order. The order is part of the
/// checkpoint format, so entries are never reordered once added.
template <typename Scalar>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Matrix<Scalar> value;
  };

  Matrix<Scalar>& add(const std::string& name, Matrix<Scalar> value) {
    if (index_.count(name) != 0) throw std::invalid_argument("duplicate parameter '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{name, std::move(value)});
    return entries_.back().value;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t index_of(const std::string& name) const { return find(name); }

  Matrix<Scalar>& at(const std::string& name) { return entries_[find(name)].value; }
  const Matrix<Scalar>& at(const std::string& name) const { return entries_[find(name)].value; }

  std::size_t size() const { return entries_.size(); }
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  /// Same names, same shapes, all zeros.
  ParamSet zeros_like() const {
    ParamSet out;
    for (const auto& e : entries_) out.add(e.name, Matrix<Scalar>::Zero(e.value.rows(), e.value.cols()));
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
    return n;
  }

  bool all_finite() const {
    for (const auto& e : entries_) {
      if (!e.value.allFinite()) return false;
    }
    return true;
  }

  template <typename Other>
  ParamSet<Other> cast() const {
    ParamSet<Other> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<Other>());
    return out;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      const auto& x = a.entries_[i];
      const auto& y = b.entries_[i];
      if (x.name != y.name || x.value.rows() != y.value.rows() || x.value.cols() != y.value.cols()) return false;
      if ((x.value.array() != y.value.array()).any()) return false;
    }
    return true;
  }

 private:
  std::size_t find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ShapeError("missing parameter '" + name + "'");
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Parameters of one ParamSet placed on a tape as leaf variables.
template <typename Scalar>
class BoundParams {
 public:
  BoundParams() = default;
  BoundParams(Tape<Scalar>& tape, const ParamSet<Scalar>& set, bool trainable) : set_(&set) {
    vars_.reserve(set.size());
    for (const auto& e : set.entries()) {
      vars_.push_back(trainable ? tape.variable(e.value) : tape.constant(e.value));
    }
  }

  Var<Scalar> operator[](const std::string& name) const {
    return vars_[set_->index_of(name)];
  }

  /// Adds each variable's gradient into the matching entry of `grads`.
  void accumulate_into(ParamSet<Scalar>& grads) const {
    auto& out = grads.entries();
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      if (vars_[i].tape()->needs_grad(vars_[i].id())) out[i].value += vars_[i].grad();
    }
  }

  bool bound() const { return set_ != nullptr; }

 private:
  const ParamSet<Scalar>* set_ = nullptr;
  std::vector<Var<Scalar>> vars_;
};

namespace init {

/// Linear map stored as (in x out) so that y = x W + b. Weights are uniform in
/// ±sqrt(3 / fan_in), well inside the ±sqrt(6 / fan_in) envelope.
template <typename Scalar>
void linear(ParamSet<Scalar>& set, const std::string& prefix, Eigen::Index in, Eigen::Index out,
            std::mt19937_64& rng) {
  const double bound = std::sqrt(3.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix<Scalar> w(in, out);
  for (Eigen::Index c = 0; c < out; ++c) {
    for (Eigen::Index r = 0; r < in; ++r) w(r, c) = static_cast<Scalar>(dist(rng));
  }
  set.add(prefix + ".weight", std::move(w));
  set.add(prefix + ".bias", Matrix<Scalar>::Zero(1, out));
}

template <typename Scalar>
void layer_norm(ParamSet<Scalar>& set, const std::string& prefix, Eigen::Index width) {
  set.add(prefix + ".gain", Matrix<Scalar>::Ones(1, width));
  set.add(prefix + ".bias", Matrix<Scalar>::Zero(1, width));
}

}  // namespace init

template <typename Scalar>
Var<Scalar> apply_linear(const BoundParams<Scalar>& p, const std::string& prefix, const Var<Scalar>& x) {
  return add_row(matmul(x, p[prefix + ".weight"]), p[prefix + ".bias"]);
}

template <typename Scalar>
Var<Scalar> apply_layer_norm(const BoundParams<Scalar>& p, const std::string& prefix, const Var<Scalar>& x) {
  return layer_norm(x, p[prefix + ".gain"], p[prefix + ".bias"]);
}

/// Seed for an independent stream derived from a base seed and a label.
inline std::uint64_t derive_seed(std::uint64_t base, const std::string& label) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return base * 0x9E3779B97F4A7C15ULL ^ h;
}

}  // namespace protfuse
