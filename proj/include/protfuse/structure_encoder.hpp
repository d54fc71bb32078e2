#pragma once

#include "protfuse/autograd.hpp"
#include "protfuse/param_set.hpp"
#include "protfuse/protein_io.hpp"
#include "protfuse/types.hpp"

#include <cstdint>
#include <string>

namespace protfuse {

enum class StructureEncoderVariant { mpnn_style, relational_style };

std::string to_string(StructureEncoderVariant v);
StructureEncoderVariant parse_structure_variant(const std::string& name);

struct StructureEncoderConfig {
  int d_struct = 32;
  int num_layers = 3;
  /// Width of the per-edge radial-basis features; must match the graph.
  int edge_width = 16;
  StructureEncoderVariant variant = StructureEncoderVariant::mpnn_style;

  void validate() const;
};

/// Distance buckets used as edge types by the relational variant.
inline constexpr int kRelationCount = 3;
int relation_of(double distance);

template <typename Scalar>
ParamSet<Scalar> init_structure_params(const StructureEncoderConfig& cfg, std::uint64_t seed);

/// Throws ShapeError when `params` does not match `cfg`.
template <typename Scalar>
void check_structure_params(const StructureEncoderConfig& cfg, const ParamSet<Scalar>& params);

/// Message passing over the residue graph. Node states start at zero; each
/// layer computes edge messages from (h_i, h_j, e_ij) through a two-layer
/// feed-forward map, takes the masked mean over valid neighbours, and applies
/// a residual update followed by layer normalisation.
template <typename Scalar>
Var<Scalar> encode_structure(Tape<Scalar>& tape, const ResidueGraph& graph, const StructureEncoderConfig& cfg,
                             const BoundParams<Scalar>& params);

template <typename Scalar>
ResidueFeatures<Scalar> encode_structure(const ResidueGraph& graph, const StructureEncoderConfig& cfg,
                                         const ParamSet<Scalar>& params);

}  // namespace protfuse
