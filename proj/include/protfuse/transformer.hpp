#pragma once

// Pre-norm transformer block shared by the sequence encoder (bidirectional)
// and the text decoder (causal).

#include "protfuse/autograd.hpp"
#include "protfuse/param_set.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace protfuse {

template <typename Scalar>
void init_transformer_block(ParamSet<Scalar>& set, const std::string& prefix, Eigen::Index width,
                            std::mt19937_64& rng) {
  init::layer_norm(set, prefix + ".ln1", width);
  init::linear(set, prefix + ".attn.q", width, width, rng);
  init::linear(set, prefix + ".attn.k", width, width, rng);
  init::linear(set, prefix + ".attn.v", width, width, rng);
  init::linear(set, prefix + ".attn.out", width, width, rng);
  init::layer_norm(set, prefix + ".ln2", width);
  init::linear(set, prefix + ".ffn.up", width, 4 * width, rng);
  init::linear(set, prefix + ".ffn.down", 4 * width, width, rng);
}

/// Multi-head self-attention. When `probabilities` is non-null the per-head
/// attention matrices are appended to it.
template <typename Scalar>
Var<Scalar> self_attention(const BoundParams<Scalar>& p, const std::string& prefix, const Var<Scalar>& x,
                           int num_heads, bool causal, std::vector<Matrix<Scalar>>* probabilities = nullptr) {
  const Eigen::Index width = x.cols();
  const Eigen::Index head_width = width / num_heads;
  const Var<Scalar> q = apply_linear(p, prefix + ".q", x);
  const Var<Scalar> k = apply_linear(p, prefix + ".k", x);
  const Var<Scalar> v = apply_linear(p, prefix + ".v", x);
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(head_width));
  std::vector<Var<Scalar>> heads;
  heads.reserve(static_cast<std::size_t>(num_heads));
  for (int h = 0; h < num_heads; ++h) {
    const Eigen::Index at = h * head_width;
    const Var<Scalar> scores = matmul_nt(slice_cols(q, at, head_width), slice_cols(k, at, head_width)) * scale;
    const Var<Scalar> probs = softmax_rows(scores, causal);
    if (probabilities != nullptr) probabilities->push_back(probs.value());
    heads.push_back(matmul(probs, slice_cols(v, at, head_width)));
  }
  const Var<Scalar> merged = num_heads == 1 ? heads.front() : concat_cols(heads);
  return apply_linear(p, prefix + ".out", merged);
}

template <typename Scalar>
Var<Scalar> transformer_block(const BoundParams<Scalar>& p, const std::string& prefix, const Var<Scalar>& x,
                              int num_heads, bool causal, std::vector<Matrix<Scalar>>* probabilities = nullptr) {
  Var<Scalar> h = x + self_attention(p, prefix + ".attn", apply_layer_norm(p, prefix + ".ln1", x), num_heads,
                                     causal, probabilities);
  const Var<Scalar> up = gelu(apply_linear(p, prefix + ".ffn.up", apply_layer_norm(p, prefix + ".ln2", h)));
  return h + apply_linear(p, prefix + ".ffn.down", up);
}

/// Fixed sinusoidal position table, `length` x `width`.
template <typename Scalar>
Matrix<Scalar> sinusoidal_positions(Eigen::Index length, Eigen::Index width) {
  Matrix<Scalar> pe(length, width);
  for (Eigen::Index pos = 0; pos < length; ++pos) {
    for (Eigen::Index i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      const double angle = static_cast<double>(pos) * rate;
      pe(pos, i) = static_cast<Scalar>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

/// Embedding table with entries uniform in ±sqrt(3) (unit variance).
template <typename Scalar>
Matrix<Scalar> init_embedding(Eigen::Index rows, Eigen::Index width, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-std::sqrt(3.0), std::sqrt(3.0));
  Matrix<Scalar> out(rows, width);
  for (Eigen::Index c = 0; c < width; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) out(r, c) = static_cast<Scalar>(dist(rng));
  }
  return out;
}

}  // namespace protfuse
