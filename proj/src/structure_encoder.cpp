#include "protfuse/structure_encoder.hpp"

#include <array>
#include <random>

namespace protfuse {

std::string to_string(StructureEncoderVariant v) {
  return v == StructureEncoderVariant::mpnn_style ? "mpnn_style" : "relational_style";
}

StructureEncoderVariant parse_structure_variant(const std::string& name) {
  if (name == "mpnn_style") return StructureEncoderVariant::mpnn_style;
  if (name == "relational_style") return StructureEncoderVariant::relational_style;
  throw ConfigError("unknown structure encoder variant '" + name + "'");
}

void StructureEncoderConfig::validate() const {
  if (d_struct < 1) throw ConfigError("structure.d_struct must be positive");
  if (num_layers < 1) throw ConfigError("structure.num_layers must be >= 1");
  if (edge_width < 1) throw ConfigError("structure.edge_width must be positive");
}

int relation_of(double distance) {
  if (distance < 6.0) return 0;
  if (distance < 12.0) return 1;
  return 2;
}

namespace {

std::string layer_prefix(int l) { return "layer" + std::to_string(l); }

std::string relation_prefix(int l, int r) { return layer_prefix(l) + ".msg1.rel" + std::to_string(r); }

}  // namespace

template <typename Scalar>
ParamSet<Scalar> init_structure_params(const StructureEncoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(seed, "struct_encoder"));
  ParamSet<Scalar> set;
  const Eigen::Index d = cfg.d_struct;
  const Eigen::Index in = 2 * d + cfg.edge_width;
  for (int l = 0; l < cfg.num_layers; ++l) {
    const std::string p = layer_prefix(l);
    if (cfg.variant == StructureEncoderVariant::mpnn_style) {
      init::linear(set, p + ".msg1", in, d, rng);
    } else {
      for (int r = 0; r < kRelationCount; ++r) init::linear(set, relation_prefix(l, r), in, d, rng);
    }
    init::linear(set, p + ".msg2", d, d, rng);
    init::layer_norm(set, p + ".norm", d);
  }
  return set;
}

template <typename Scalar>
void check_structure_params(const StructureEncoderConfig& cfg, const ParamSet<Scalar>& params) {
  const ParamSet<Scalar> expected = init_structure_params<Scalar>(cfg, 0);
  if (expected.size() != params.size()) {
    throw ShapeError("structure encoder parameters do not match the configuration");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& e = expected.entries()[i];
    const auto& a = params.entries()[i];
    if (e.name != a.name || e.value.rows() != a.value.rows() || e.value.cols() != a.value.cols()) {
      throw ShapeError("structure encoder parameter '" + e.name + "' has the wrong shape");
    }
  }
}

template <typename Scalar>
Var<Scalar> encode_structure(Tape<Scalar>& tape, const ResidueGraph& graph, const StructureEncoderConfig& cfg,
                             const BoundParams<Scalar>& params) {
  const Eigen::Index L = graph.num_residues;
  const Eigen::Index k = graph.k;
  if (graph.edge_width() != cfg.edge_width) {
    throw ShapeError("residue graph edge width " + std::to_string(graph.edge_width()) +
                     " does not match structure.edge_width " + std::to_string(cfg.edge_width));
  }

  std::vector<Eigen::Index> self_index(static_cast<std::size_t>(L * k));
  std::vector<Eigen::Index> neighbor_index(static_cast<std::size_t>(L * k));
  Matrix<Scalar> aggregate = Matrix<Scalar>::Zero(L, L * k);
  std::array<Vector<Scalar>, kRelationCount> relation_mask;
  for (auto& m : relation_mask) m = Vector<Scalar>::Zero(L * k);
  for (Eigen::Index i = 0; i < L; ++i) {
    const Scalar inv_count = Scalar(1) / static_cast<Scalar>(graph.valid_count(i));
    for (Eigen::Index s = 0; s < k; ++s) {
      const Eigen::Index e = i * k + s;
      self_index[static_cast<std::size_t>(e)] = i;
      neighbor_index[static_cast<std::size_t>(e)] = graph.neighbor_index(i, s);
      if (graph.valid(i, s)) {
        aggregate(i, e) = inv_count;
        relation_mask[static_cast<std::size_t>(relation_of(graph.distance(i, s)))](e) = Scalar(1);
      }
    }
  }

  const Var<Scalar> edges = tape.constant(graph.edge_features.template cast<Scalar>());
  const Var<Scalar> mean = tape.constant(std::move(aggregate));
  Var<Scalar> h = tape.constant(Matrix<Scalar>::Zero(L, cfg.d_struct));
  for (int l = 0; l < cfg.num_layers; ++l) {
    const std::string p = layer_prefix(l);
    const Var<Scalar> message_in = concat_cols<Scalar>({gather_rows(h, self_index), gather_rows(h, neighbor_index), edges});
    Var<Scalar> hidden;
    if (cfg.variant == StructureEncoderVariant::mpnn_style) {
      hidden = apply_linear(params, p + ".msg1", message_in);
    } else {
      for (int r = 0; r < kRelationCount; ++r) {
        const Var<Scalar> typed = scale_rows(apply_linear(params, relation_prefix(l, r), message_in),
                                             relation_mask[static_cast<std::size_t>(r)]);
        hidden = r == 0 ? typed : hidden + typed;
      }
    }
    const Var<Scalar> message = apply_linear(params, p + ".msg2", gelu(hidden));
    h = apply_layer_norm(params, p + ".norm", h + matmul(mean, message));
  }
  return h;
}

template <typename Scalar>
ResidueFeatures<Scalar> encode_structure(const ResidueGraph& graph, const StructureEncoderConfig& cfg,
                                         const ParamSet<Scalar>& params) {
  check_structure_params(cfg, params);
  Tape<Scalar> tape(false);
  BoundParams<Scalar> bound(tape, params, false);
  return ResidueFeatures<Scalar>{encode_structure(tape, graph, cfg, bound).value()};
}

#define PROTFUSE_INSTANTIATE(S)                                                                                   \
  template ParamSet<S> init_structure_params<S>(const StructureEncoderConfig&, std::uint64_t);                   \
  template void check_structure_params<S>(const StructureEncoderConfig&, const ParamSet<S>&);                    \
  template Var<S> encode_structure<S>(Tape<S>&, const ResidueGraph&, const StructureEncoderConfig&,              \
                                      const BoundParams<S>&);                                                    \
  template ResidueFeatures<S> encode_structure<S>(const ResidueGraph&, const StructureEncoderConfig&,            \
                                                  const ParamSet<S>&);
PROTFUSE_INSTANTIATE(float)
PROTFUSE_INSTANTIATE(double)
#undef PROTFUSE_INSTANTIATE

}  // namespace protfuse
