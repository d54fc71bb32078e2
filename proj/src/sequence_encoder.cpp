#include "protfuse/sequence_encoder.hpp"

#include "protfuse/protein_io.hpp"
#include "protfuse/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace protfuse {

ResidueTokenIds tokenize_residues(std::string_view sequence) {
  if (sequence.empty()) throw std::invalid_argument("cannot tokenize an empty residue sequence");
  ResidueTokenIds out;
  out.ids.reserve(sequence.size());
  for (char c : sequence) {
    const auto pos = kCanonicalResidues.find(c);
    out.ids.push_back(pos == std::string_view::npos ? residue_vocab::kUnknown : static_cast<int>(pos));
  }
  return out;
}

std::string detokenize_residues(const ResidueTokenIds& tokens) {
  std::string out;
  out.reserve(tokens.ids.size());
  for (int id : tokens.ids) {
    if (id >= 0 && id < 20) {
      out.push_back(kCanonicalResidues[static_cast<std::size_t>(id)]);
    } else if (id == residue_vocab::kMask) {
      out.push_back('#');
    } else {
      out.push_back('X');
    }
  }
  return out;
}

void SequenceEncoderConfig::validate() const {
  if (d_seq < 1 || num_layers < 1 || num_heads < 1) throw ConfigError("sequence encoder sizes must be positive");
  if (d_seq % num_heads != 0) throw ConfigError("sequence.d_seq must be divisible by sequence.num_heads");
}

SequenceEncoderConfig SequenceEncoderConfig::preset(const std::string& name) {
  if (name == "esm-xs") return {32, 2, 4};
  if (name == "esm-s") return {64, 2, 4};
  if (name == "esm-m") return {128, 3, 8};
  throw ConfigError("unknown sequence encoder preset '" + name + "'");
}

template <typename Scalar>
ParamSet<Scalar> init_sequence_params(const SequenceEncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(seed, "seq_encoder"));
  ParamSet<Scalar> set;
  set.add("embed", init_embedding<Scalar>(residue_vocab::kSize, cfg.d_seq, rng));
  for (int l = 0; l < cfg.num_layers; ++l) init_transformer_block(set, "block" + std::to_string(l), cfg.d_seq, rng);
  init::layer_norm(set, "final_norm", cfg.d_seq);
  init::linear(set, "mlm_head", cfg.d_seq, residue_vocab::kSize, rng);
  return set;
}

template <typename Scalar>
void check_sequence_params(const SequenceEncoderConfig& cfg, const ParamSet<Scalar>& params) {
  const ParamSet<Scalar> expected = init_sequence_params<Scalar>(cfg, 0);
  if (expected.size() != params.size()) throw ShapeError("sequence encoder parameters do not match the configuration");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& e = expected.entries()[i];
    const auto& a = params.entries()[i];
    if (e.name != a.name || e.value.rows() != a.value.rows() || e.value.cols() != a.value.cols()) {
      throw ShapeError("sequence encoder parameter '" + e.name + "' has the wrong shape");
    }
  }
}

template <typename Scalar>
Var<Scalar> encode_sequence(Tape<Scalar>& tape, const ResidueTokenIds& tokens, const SequenceEncoderConfig& cfg,
                            const BoundParams<Scalar>& params, std::vector<Matrix<Scalar>>* attention) {
  const auto L = static_cast<Eigen::Index>(tokens.length());
  if (L == 0) throw std::invalid_argument("encode_sequence: empty token list");
  std::vector<Eigen::Index> ids(tokens.ids.begin(), tokens.ids.end());
  for (auto id : ids) {
    if (id < 0 || id >= residue_vocab::kSize) throw ShapeError("residue token id out of range");
  }
  Var<Scalar> x = gather_rows(params["embed"], std::move(ids)) +
                  tape.constant(sinusoidal_positions<Scalar>(L, cfg.d_seq));
  for (int l = 0; l < cfg.num_layers; ++l) {
    x = transformer_block(params, "block" + std::to_string(l), x, cfg.num_heads, false, attention);
  }
  return apply_layer_norm(params, "final_norm", x);
}

template <typename Scalar>
ResidueFeatures<Scalar> encode_sequence(const ResidueTokenIds& tokens, const SequenceEncoderConfig& cfg,
                                        const ParamSet<Scalar>& params, std::vector<Matrix<Scalar>>* attention) {
  check_sequence_params(cfg, params);
  Tape<Scalar> tape(false);
  BoundParams<Scalar> bound(tape, params, false);
  return ResidueFeatures<Scalar>{encode_sequence(tape, tokens, cfg, bound, attention).value()};
}

std::size_t masked_count(std::size_t length, double mask_rate) {
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw std::invalid_argument("mask_rate must lie in (0, 1)");
  const auto n = static_cast<std::size_t>(std::ceil(mask_rate * static_cast<double>(length)));
  return std::clamp<std::size_t>(n, 1, length);
}

template <typename Scalar>
Scalar mlm_step(const std::vector<ResidueTokenIds>& batch, double mask_rate, const SequenceEncoderConfig& cfg,
                const ParamSet<Scalar>& params, std::mt19937_64& rng, ParamSet<Scalar>* grads) {
  if (batch.empty()) throw std::invalid_argument("mlm_step: empty batch");
  check_sequence_params(cfg, params);
  Scalar total = 0;
  for (const auto& seq : batch) {
    const std::size_t n = masked_count(seq.length(), mask_rate);
    std::vector<std::size_t> positions(seq.length());
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    std::shuffle(positions.begin(), positions.end(), rng);
    positions.resize(n);

    ResidueTokenIds masked = seq;
    std::vector<int> targets(seq.length(), -1);
    std::vector<Scalar> weights(seq.length(), Scalar(0));
    for (std::size_t p : positions) {
      targets[p] = seq.ids[p];
      weights[p] = Scalar(1) / static_cast<Scalar>(n * batch.size());
      masked.ids[p] = residue_vocab::kMask;
    }

    Tape<Scalar> tape(grads != nullptr);
    BoundParams<Scalar> bound(tape, params, grads != nullptr);
    const Var<Scalar> logits = apply_linear(bound, "mlm_head", encode_sequence(tape, masked, cfg, bound));
    const Var<Scalar> loss = weighted_cross_entropy(logits, std::move(targets), std::move(weights));
    total += loss.value()(0, 0);
    if (grads != nullptr) {
      tape.backward(loss);
      bound.accumulate_into(*grads);
    }
  }
  return total;
}

#define PROTFUSE_INSTANTIATE(S)                                                                                   \
  template ParamSet<S> init_sequence_params<S>(const SequenceEncoderConfig&, std::uint64_t);                     \
  template void check_sequence_params<S>(const SequenceEncoderConfig&, const ParamSet<S>&);                      \
  template Var<S> encode_sequence<S>(Tape<S>&, const ResidueTokenIds&, const SequenceEncoderConfig&,             \
                                     const BoundParams<S>&, std::vector<Matrix<S>>*);                            \
  template ResidueFeatures<S> encode_sequence<S>(const ResidueTokenIds&, const SequenceEncoderConfig&,           \
                                                 const ParamSet<S>&, std::vector<Matrix<S>>*);                   \
  template S mlm_step<S>(const std::vector<ResidueTokenIds>&, double, const SequenceEncoderConfig&,              \
                         const ParamSet<S>&, std::mt19937_64&, ParamSet<S>*);
PROTFUSE_INSTANTIATE(float)
PROTFUSE_INSTANTIATE(double)
#undef PROTFUSE_INSTANTIATE

}  // namespace protfuse
