#include "protfuse/text_decoder.hpp"

#include "protfuse/transformer.hpp"

#include <numeric>
#include <random>
#include <stdexcept>

namespace protfuse {

std::vector<int> encode_text(std::string_view text) {
  std::vector<int> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, kProteinPlaceholder.size(), kProteinPlaceholder) == 0) {
      out.push_back(text_vocab::kProtein);
      i += kProteinPlaceholder.size();
    } else {
      out.push_back(static_cast<unsigned char>(text[i]));
      ++i;
    }
  }
  return out;
}

std::vector<int> tokenize_text(std::string_view text) {
  std::vector<int> out;
  out.reserve(text.size() + 2);
  out.push_back(text_vocab::kBos);
  const auto body = encode_text(text);
  out.insert(out.end(), body.begin(), body.end());
  out.push_back(text_vocab::kEos);
  return out;
}

std::string detokenize_text(std::span<const int> ids) {
  std::string out;
  for (int id : ids) {
    if (id >= 0 && id < 256) {
      out.push_back(static_cast<char>(id));
    } else if (id == text_vocab::kProtein) {
      out += kProteinPlaceholder;
    }
  }
  return out;
}

void DecoderConfig::validate() const {
  if (d_model < 1 || num_layers < 1 || num_heads < 1) throw ConfigError("decoder sizes must be positive");
  if (d_model % num_heads != 0) throw ConfigError("decoder.d_model must be divisible by decoder.num_heads");
  if (vocab_size != text_vocab::kSize) {
    throw ConfigError("decoder.vocab_size must be " + std::to_string(text_vocab::kSize) + " (byte vocabulary)");
  }
  if (max_positions < 2) throw ConfigError("decoder.max_positions must be >= 2");
}

template <typename Scalar>
std::size_t SplicedInput<Scalar>::loss_positions() const {
  return static_cast<std::size_t>(std::count(loss_mask.begin(), loss_mask.end(), true));
}

template <typename Scalar>
ParamSet<Scalar> init_embed_table(const DecoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(seed, "embed_table"));
  ParamSet<Scalar> set;
  set.add("tokens", init_embedding<Scalar>(cfg.vocab_size, cfg.d_model, rng));
  return set;
}

template <typename Scalar>
ParamSet<Scalar> init_decoder_params(const DecoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(seed, "decoder"));
  ParamSet<Scalar> set;
  set.add("pos_embed", init_embedding<Scalar>(cfg.max_positions, cfg.d_model, rng));
  for (int l = 0; l < cfg.num_layers; ++l) init_transformer_block(set, "block" + std::to_string(l), cfg.d_model, rng);
  init::layer_norm(set, "final_norm", cfg.d_model);
  init::linear(set, "lm_head", cfg.d_model, cfg.vocab_size, rng);
  return set;
}

namespace {

template <typename Scalar>
Var<Scalar> embed_ids(const BoundParams<Scalar>& table, const std::vector<int>& ids) {
  std::vector<Eigen::Index> idx(ids.begin(), ids.end());
  return gather_rows(table["tokens"], std::move(idx));
}

}  // namespace

template <typename Scalar>
SplicedInput<Scalar> assemble(std::span<const int> question_ids, const std::vector<Var<Scalar>>& proteins,
                              std::span<const int> answer_ids, const DecoderConfig& cfg,
                              const BoundParams<Scalar>& embed_table, bool close_answer) {
  if (!question_ids.empty() && question_ids.back() == text_vocab::kEos) question_ids = question_ids.first(question_ids.size() - 1);
  if (!answer_ids.empty() && answer_ids.front() == text_vocab::kBos) answer_ids = answer_ids.subspan(1);
  if (!answer_ids.empty() && answer_ids.back() == text_vocab::kEos) answer_ids = answer_ids.first(answer_ids.size() - 1);

  const auto placeholders =
      static_cast<std::size_t>(std::count(question_ids.begin(), question_ids.end(), text_vocab::kProtein));
  if (placeholders != proteins.size()) {
    throw std::invalid_argument("question has " + std::to_string(placeholders) + " protein placeholders but " +
                                std::to_string(proteins.size()) + " protein embeddings were given");
  }

  SplicedInput<Scalar> out;
  std::vector<Var<Scalar>> parts;
  std::vector<int> pending;
  auto flush = [&] {
    if (pending.empty()) return;
    parts.push_back(embed_ids(embed_table, pending));
    pending.clear();
  };

  std::size_t next_protein = 0;
  for (int id : question_ids) {
    if (id == text_vocab::kProtein) {
      flush();
      const Var<Scalar>& p = proteins[next_protein++];
      if (p.cols() != cfg.d_model) throw ShapeError("protein embedding width does not match decoder.d_model");
      out.protein_spans.emplace_back(out.length(), p.rows());
      parts.push_back(p);
      out.token_ids.insert(out.token_ids.end(), static_cast<std::size_t>(p.rows()), -1);
      out.loss_mask.insert(out.loss_mask.end(), static_cast<std::size_t>(p.rows()), false);
      out.segments.insert(out.segments.end(), static_cast<std::size_t>(p.rows()), Segment::protein);
    } else {
      pending.push_back(id);
      out.token_ids.push_back(id);
      out.loss_mask.push_back(false);
      out.segments.push_back(Segment::question_text);
    }
  }
  flush();

  for (int id : answer_ids) {
    pending.push_back(id);
    out.token_ids.push_back(id);
    out.loss_mask.push_back(true);
    out.segments.push_back(Segment::answer_text);
  }
  if (close_answer) {
    pending.push_back(text_vocab::kEos);
    out.token_ids.push_back(text_vocab::kEos);
    out.loss_mask.push_back(true);
    out.segments.push_back(Segment::answer_text);
  }
  flush();

  if (parts.empty()) throw std::invalid_argument("assemble: nothing to splice");
  out.rows = parts.size() == 1 ? parts.front() : concat_rows(parts);
  return out;
}

template <typename Scalar>
Var<Scalar> decoder_logits(const Var<Scalar>& rows, const DecoderConfig& cfg, const BoundParams<Scalar>& decoder) {
  const Eigen::Index T = rows.rows();
  if (T > cfg.max_positions) {
    throw std::length_error("sequence of " + std::to_string(T) + " rows exceeds decoder.max_positions " +
                            std::to_string(cfg.max_positions));
  }
  if (rows.cols() != cfg.d_model) throw ShapeError("decoder input width does not match decoder.d_model");
  std::vector<Eigen::Index> positions(static_cast<std::size_t>(T));
  std::iota(positions.begin(), positions.end(), Eigen::Index{0});
  Var<Scalar> x = rows + gather_rows(decoder["pos_embed"], std::move(positions));
  for (int l = 0; l < cfg.num_layers; ++l) {
    x = transformer_block(decoder, "block" + std::to_string(l), x, cfg.num_heads, true);
  }
  return apply_linear(decoder, "lm_head", apply_layer_norm(decoder, "final_norm", x));
}

template <typename Scalar>
Var<Scalar> forward_loss(const SplicedInput<Scalar>& input, const DecoderConfig& cfg,
                         const BoundParams<Scalar>& decoder) {
  const Eigen::Index T = input.length();
  const std::size_t count = input.loss_positions();
  if (count == 0) throw std::invalid_argument("forward_loss: no answer positions to score");
  if (input.loss_mask.front()) throw std::invalid_argument("forward_loss: the first row cannot be a target");
  std::vector<int> targets(static_cast<std::size_t>(T), -1);
  std::vector<Scalar> weights(static_cast<std::size_t>(T), Scalar(0));
  for (Eigen::Index t = 1; t < T; ++t) {
    if (!input.loss_mask[static_cast<std::size_t>(t)]) continue;
    targets[static_cast<std::size_t>(t - 1)] = input.token_ids[static_cast<std::size_t>(t)];
    weights[static_cast<std::size_t>(t - 1)] = Scalar(1) / static_cast<Scalar>(count);
  }
  return weighted_cross_entropy(decoder_logits(input.rows, cfg, decoder), std::move(targets), std::move(weights));
}

template <typename Scalar>
int argmax_lowest(const Eigen::Ref<const RowVector<Scalar>>& row) {
  int best = 0;
  for (Eigen::Index i = 1; i < row.size(); ++i) {
    if (row(i) > row(best)) best = static_cast<int>(i);
  }
  return best;
}

template <typename Scalar>
std::vector<int> generate(std::span<const int> question_ids, const std::vector<Matrix<Scalar>>& proteins,
                          const DecoderConfig& cfg, const ParamSet<Scalar>& decoder,
                          const ParamSet<Scalar>& embed_table, int max_new_tokens) {
  if (max_new_tokens < 0) throw std::invalid_argument("max_new_tokens must be non-negative");
  std::vector<int> produced;
  Matrix<Scalar> prefix;
  {
    Tape<Scalar> tape(false);
    BoundParams<Scalar> table(tape, embed_table, false);
    std::vector<Var<Scalar>> protein_vars;
    for (const auto& p : proteins) protein_vars.push_back(tape.constant(p));
    prefix = assemble(question_ids, protein_vars, std::span<const int>{}, cfg, table, false).rows.value();
  }
  if (prefix.rows() + max_new_tokens > cfg.max_positions) {
    throw std::length_error("prompt of " + std::to_string(prefix.rows()) + " rows plus " +
                            std::to_string(max_new_tokens) + " new tokens exceeds decoder.max_positions");
  }
  const Matrix<Scalar>& tokens = embed_table.at("tokens");
  Matrix<Scalar> rows = prefix;
  for (int step = 0; step < max_new_tokens; ++step) {
    Tape<Scalar> tape(false);
    BoundParams<Scalar> bound(tape, decoder, false);
    const Var<Scalar> logits = decoder_logits(tape.constant(rows), cfg, bound);
    const int next = argmax_lowest<Scalar>(logits.value().row(logits.rows() - 1));
    if (next == text_vocab::kEos) break;
    produced.push_back(next);
    rows.conservativeResize(rows.rows() + 1, Eigen::NoChange);
    rows.row(rows.rows() - 1) = tokens.row(next);
  }
  return produced;
}

#define PROTFUSE_INSTANTIATE(S)                                                                                    \
  template struct SplicedInput<S>;                                                                                 \
  template ParamSet<S> init_embed_table<S>(const DecoderConfig&, std::uint64_t);                                   \
  template ParamSet<S> init_decoder_params<S>(const DecoderConfig&, std::uint64_t);                                \
  template SplicedInput<S> assemble<S>(std::span<const int>, const std::vector<Var<S>>&, std::span<const int>,      \
                                       const DecoderConfig&, const BoundParams<S>&, bool);                         \
  template Var<S> decoder_logits<S>(const Var<S>&, const DecoderConfig&, const BoundParams<S>&);                   \
  template Var<S> forward_loss<S>(const SplicedInput<S>&, const DecoderConfig&, const BoundParams<S>&);            \
  template std::vector<int> generate<S>(std::span<const int>, const std::vector<Matrix<S>>&, const DecoderConfig&, \
                                        const ParamSet<S>&, const ParamSet<S>&, int);                              \
  template int argmax_lowest<S>(const Eigen::Ref<const RowVector<S>>&);
PROTFUSE_INSTANTIATE(float)
PROTFUSE_INSTANTIATE(double)
#undef PROTFUSE_INSTANTIATE

}  // namespace protfuse
