#pragma once

#include "protfuse/projector.hpp"
#include "protfuse/protein_io.hpp"
#include "protfuse/sequence_encoder.hpp"
#include "protfuse/structure_encoder.hpp"
#include "protfuse/text_decoder.hpp"

#include <array>
#include <set>
#include <string>
#include <vector>

namespace protfuse {

enum class Partition { struct_encoder, seq_encoder, proj_struct, proj_seq, decoder, embed_table };

inline constexpr std::array<Partition, 6> kAllPartitions = {
    Partition::struct_encoder, Partition::seq_encoder, Partition::proj_struct,
    Partition::proj_seq,       Partition::decoder,     Partition::embed_table,
};

std::string to_string(Partition p);
Partition parse_partition(const std::string& name);

using PartitionSet = std::set<Partition>;

struct GraphConfig {
  int k = 16;
  int rbf_count = 16;
};

struct ModelConfig {
  StructureEncoderConfig structure;
  SequenceEncoderConfig sequence;
  DecoderConfig decoder;
  GraphConfig graph;
  int projector_hidden = 64;
  int projector_depth = 2;
  FusionMode fusion = FusionMode::add;

  ProjectorConfig seq_projector() const;
  ProjectorConfig struct_projector() const;
  /// Rows spliced into the decoder for a protein of `residues` residues.
  Eigen::Index protein_tokens(Eigen::Index residues) const;
  void validate() const;
};

/// All learnable arrays, one ParamSet per partition.
template <typename Scalar>
struct ModelParams {
  std::array<ParamSet<Scalar>, kAllPartitions.size()> parts;

  ParamSet<Scalar>& operator[](Partition p) { return parts[static_cast<std::size_t>(p)]; }
  const ParamSet<Scalar>& operator[](Partition p) const { return parts[static_cast<std::size_t>(p)]; }

  ModelParams zeros_like() const {
    ModelParams out;
    for (std::size_t i = 0; i < parts.size(); ++i) out.parts[i] = parts[i].zeros_like();
    return out;
  }

  bool all_finite() const {
    for (const auto& p : parts) {
      if (!p.all_finite()) return false;
    }
    return true;
  }

  template <typename Other>
  ModelParams<Other> cast() const {
    ModelParams<Other> out;
    for (std::size_t i = 0; i < parts.size(); ++i) out.parts[i] = parts[i].template cast<Other>();
    return out;
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) { return a.parts == b.parts; }
};

template <typename Scalar>
ModelParams<Scalar> init_model_params(const ModelConfig& cfg, std::uint64_t seed);

/// Per-protein inputs computed once and reused across epochs.
struct ProteinInput {
  std::string id;
  ResidueGraph graph;
  ResidueTokenIds tokens;

  Eigen::Index length() const { return graph.num_residues; }
};

ProteinInput prepare_protein(const ProteinStructure& s, const GraphConfig& cfg);

struct PreparedExample {
  std::string id;
  std::vector<const ProteinInput*> proteins;
  std::vector<int> question_ids;
  std::vector<int> answer_ids;
};

/// Partitions placed on a tape. Partitions listed in `trainable` become
/// gradient-carrying leaves; the rest are constants.
template <typename Scalar>
class BoundModel {
 public:
  BoundModel(Tape<Scalar>& tape, const ModelParams<Scalar>& params, const PartitionSet& trainable);

  const BoundParams<Scalar>& operator[](Partition p) const { return parts_[static_cast<std::size_t>(p)]; }
  void accumulate_into(ModelParams<Scalar>& grads) const;

 private:
  std::array<BoundParams<Scalar>, kAllPartitions.size()> parts_;
};

/// H_p for one protein under cfg.fusion.
template <typename Scalar>
Var<Scalar> protein_embedding(Tape<Scalar>& tape, const ModelConfig& cfg, const BoundModel<Scalar>& model,
                              const ProteinInput& protein);

template <typename Scalar>
Matrix<Scalar> protein_embedding(const ModelConfig& cfg, const ModelParams<Scalar>& params,
                                 const ProteinInput& protein);

/// Loss of one example. When `grads` is non-null, gradients for the
/// partitions in `grad_partitions` are added to it, scaled by `grad_scale`.
template <typename Scalar>
Scalar example_loss(const ModelConfig& cfg, const ModelParams<Scalar>& params, const PreparedExample& example,
                    ModelParams<Scalar>* grads = nullptr, const PartitionSet& grad_partitions = {},
                    Scalar grad_scale = Scalar(1));

/// Causal language-model loss over the text alone. Each placeholder is
/// widened to protein_tokens(L) copies of the reserved token, and those rows
/// are never prediction targets. Used to pretrain the decoder before the
/// protein stages.
template <typename Scalar>
Scalar text_lm_loss(const ModelConfig& cfg, const ModelParams<Scalar>& params, const PreparedExample& example,
                    ModelParams<Scalar>* grads = nullptr, const PartitionSet& grad_partitions = {},
                    Scalar grad_scale = Scalar(1));

template <typename Scalar>
std::vector<int> generate_answer(const ModelConfig& cfg, const ModelParams<Scalar>& params,
                                 std::span<const int> question_ids, const std::vector<const ProteinInput*>& proteins,
                                 int max_new_tokens);

}  // namespace protfuse
