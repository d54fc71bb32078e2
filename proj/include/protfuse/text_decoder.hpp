#pragma once

#include "protfuse/autograd.hpp"
#include "protfuse/param_set.hpp"
#include "protfuse/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace protfuse {

/// Byte-level text vocabulary: ids 0..255 are raw bytes, followed by four
/// reserved specials.
namespace text_vocab {
inline constexpr int kBos = 256;
inline constexpr int kEos = 257;
inline constexpr int kPad = 258;
inline constexpr int kProtein = 259;
inline constexpr int kSize = 260;
}  // namespace text_vocab

inline constexpr std::string_view kProteinPlaceholder = "<protein>";

/// Bytes of `text`, with every "<protein>" literal mapped to the reserved id.
std::vector<int> encode_text(std::string_view text);
/// [BOS] + encode_text(text) + [EOS].
std::vector<int> tokenize_text(std::string_view text);
/// Inverse of encode_text; BOS, EOS and PAD are skipped.
std::string detokenize_text(std::span<const int> ids);

struct DecoderConfig {
  int d_model = 64;
  int num_layers = 2;
  int num_heads = 4;
  int vocab_size = text_vocab::kSize;
  int max_positions = 384;

  void validate() const;
};

enum class Segment { question_text, protein, answer_text };

/// Decoder input after placeholder splicing. `token_ids` holds the text id at
/// each row (-1 on protein rows). loss_mask[t] marks rows whose token is a
/// prediction target (answer tokens and the closing EOS); the prediction for
/// row t is read from the logits of row t - 1.
template <typename Scalar>
struct SplicedInput {
  Var<Scalar> rows;
  std::vector<int> token_ids;
  std::vector<bool> loss_mask;
  std::vector<Segment> segments;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> protein_spans;  // (start, length)

  Eigen::Index length() const { return static_cast<Eigen::Index>(token_ids.size()); }
  std::size_t loss_positions() const;
};

/// embed_table partition: one array "tokens" (vocab_size x d_model).
template <typename Scalar>
ParamSet<Scalar> init_embed_table(const DecoderConfig& cfg, std::uint64_t seed);

/// decoder partition: learned positions, causal blocks, final norm, lm_head.
template <typename Scalar>
ParamSet<Scalar> init_decoder_params(const DecoderConfig& cfg, std::uint64_t seed);

/// Replaces each placeholder in `question_ids` with the matching protein rows
/// and appends the answer. A trailing EOS on the question and a leading BOS /
/// trailing EOS on the answer are stripped; with `close_answer` an EOS row is
/// appended after the answer and included in the loss. Throws
/// std::invalid_argument when the placeholder count differs from
/// proteins.size().
template <typename Scalar>
SplicedInput<Scalar> assemble(std::span<const int> question_ids, const std::vector<Var<Scalar>>& proteins,
                              std::span<const int> answer_ids, const DecoderConfig& cfg,
                              const BoundParams<Scalar>& embed_table, bool close_answer = true);

/// T x vocab logits under a causal mask that covers every row, protein rows
/// included. Throws std::length_error when T exceeds max_positions.
template <typename Scalar>
Var<Scalar> decoder_logits(const Var<Scalar>& rows, const DecoderConfig& cfg, const BoundParams<Scalar>& decoder);

/// Mean negative log-likelihood over the loss-mask positions.
template <typename Scalar>
Var<Scalar> forward_loss(const SplicedInput<Scalar>& input, const DecoderConfig& cfg,
                         const BoundParams<Scalar>& decoder);

/// Greedy continuation of the assembled question prefix until EOS or
/// `max_new_tokens`. Ties in the argmax go to the lower token id. The EOS is
/// not included in the result.
template <typename Scalar>
std::vector<int> generate(std::span<const int> question_ids, const std::vector<Matrix<Scalar>>& proteins,
                          const DecoderConfig& cfg, const ParamSet<Scalar>& decoder,
                          const ParamSet<Scalar>& embed_table, int max_new_tokens);

/// Index of the largest entry; the lowest index wins ties.
template <typename Scalar>
int argmax_lowest(const Eigen::Ref<const RowVector<Scalar>>& row);

}  // namespace protfuse
