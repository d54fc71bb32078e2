#pragma once

#include "protfuse/autograd.hpp"
#include "protfuse/param_set.hpp"
#include "protfuse/types.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace protfuse {

/// Row-wise MLP: `depth` linear layers with tanh between consecutive layers.
struct ProjectorConfig {
  int d_in = 32;
  int d_model = 64;
  int hidden = 64;
  int depth = 2;

  void validate() const;
};

enum class FusionMode { add, concat_tokens, seq_only, struct_only };

std::string to_string(FusionMode m);
FusionMode parse_fusion_mode(const std::string& name);
bool needs_sequence(FusionMode m);
bool needs_structure(FusionMode m);

template <typename Scalar>
struct FusedProteinEmbedding {
  Matrix<Scalar> values;
  bool has_sequence = false;
  bool has_structure = false;

  Eigen::Index length() const { return values.rows(); }
};

/// `label` separates the random streams of the two projectors.
template <typename Scalar>
ParamSet<Scalar> init_projector_params(const ProjectorConfig& cfg, std::uint64_t seed, const std::string& label);

template <typename Scalar>
Var<Scalar> project(const Var<Scalar>& features, const ProjectorConfig& cfg, const BoundParams<Scalar>& params);

/// H_seq = MLP_seq(Z_seq). Throws ShapeError if the width is not cfg.d_in.
template <typename Scalar>
Matrix<Scalar> project_seq(const ResidueFeatures<Scalar>& z, const ProjectorConfig& cfg, const ParamSet<Scalar>& params);

/// H_struct = MLP_struct(Z_struct); same contract with separate parameters.
template <typename Scalar>
Matrix<Scalar> project_struct(const ResidueFeatures<Scalar>& z, const ProjectorConfig& cfg,
                              const ParamSet<Scalar>& params);

/// Combines projected modalities. add: row-wise sum (length L);
/// concat_tokens: structure rows then sequence rows (length 2L);
/// seq_only / struct_only pass one modality through.
template <typename Scalar>
Var<Scalar> fuse(const std::optional<Var<Scalar>>& h_seq, const std::optional<Var<Scalar>>& h_struct, FusionMode mode);

template <typename Scalar>
FusedProteinEmbedding<Scalar> fuse(const std::optional<Matrix<Scalar>>& h_seq,
                                   const std::optional<Matrix<Scalar>>& h_struct, FusionMode mode);

}  // namespace protfuse
