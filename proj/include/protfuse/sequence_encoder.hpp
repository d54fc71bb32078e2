#pragma once

#include "protfuse/autograd.hpp"
#include "protfuse/param_set.hpp"
#include "protfuse/types.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace protfuse {

/// Residue vocabulary: the 20 canonical codes, then 'X', mask and pad.
namespace residue_vocab {
inline constexpr int kUnknown = 20;
inline constexpr int kMask = 21;
inline constexpr int kPad = 22;
inline constexpr int kSize = 23;
}  // namespace residue_vocab

struct ResidueTokenIds {
  std::vector<int> ids;

  std::size_t length() const { return ids.size(); }
};

/// One token per residue, no begin/end markers. Non-canonical letters map to
/// the 'X' id. Throws std::invalid_argument on an empty sequence.
ResidueTokenIds tokenize_residues(std::string_view sequence);
std::string detokenize_residues(const ResidueTokenIds& tokens);

struct SequenceEncoderConfig {
  int d_seq = 32;
  int num_layers = 2;
  int num_heads = 4;

  void validate() const;

  /// Size presets "esm-xs", "esm-s", "esm-m" (widths 32 / 64 / 128).
  static SequenceEncoderConfig preset(const std::string& name);
};

template <typename Scalar>
ParamSet<Scalar> init_sequence_params(const SequenceEncoderConfig& cfg, std::uint64_t seed);

template <typename Scalar>
void check_sequence_params(const SequenceEncoderConfig& cfg, const ParamSet<Scalar>& params);

/// Token embedding + sinusoidal positions + pre-norm bidirectional blocks.
/// Returns L x d_seq. Attention matrices are appended to `attention` if given.
template <typename Scalar>
Var<Scalar> encode_sequence(Tape<Scalar>& tape, const ResidueTokenIds& tokens, const SequenceEncoderConfig& cfg,
                            const BoundParams<Scalar>& params, std::vector<Matrix<Scalar>>* attention = nullptr);

template <typename Scalar>
ResidueFeatures<Scalar> encode_sequence(const ResidueTokenIds& tokens, const SequenceEncoderConfig& cfg,
                                        const ParamSet<Scalar>& params,
                                        std::vector<Matrix<Scalar>>* attention = nullptr);

/// Number of positions masked for a sequence of `length`: ceil(rate * length).
std::size_t masked_count(std::size_t length, double mask_rate);

/// Masked-language-model loss over a batch (mean over masked positions per
/// sequence, then mean over the batch). Gradients are added to `grads` when it
/// is non-null.
template <typename Scalar>
Scalar mlm_step(const std::vector<ResidueTokenIds>& batch, double mask_rate, const SequenceEncoderConfig& cfg,
                const ParamSet<Scalar>& params, std::mt19937_64& rng, ParamSet<Scalar>* grads);

}  // namespace protfuse
