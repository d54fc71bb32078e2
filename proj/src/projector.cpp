#include "protfuse/projector.hpp"

#include <random>

namespace protfuse {

void ProjectorConfig::validate() const {
  if (d_in < 1 || d_model < 1 || hidden < 1) throw ConfigError("projector widths must be positive");
  if (depth < 1) throw ConfigError("projector.depth must be >= 1");
}

std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::add: return "add";
    case FusionMode::concat_tokens: return "concat_tokens";
    case FusionMode::seq_only: return "seq_only";
    case FusionMode::struct_only: return "struct_only";
  }
  return "add";
}

FusionMode parse_fusion_mode(const std::string& name) {
  if (name == "add") return FusionMode::add;
  if (name == "concat_tokens") return FusionMode::concat_tokens;
  if (name == "seq_only") return FusionMode::seq_only;
  if (name == "struct_only") return FusionMode::struct_only;
  throw ConfigError("unknown fusion mode '" + name + "'");
}

bool needs_sequence(FusionMode m) { return m != FusionMode::struct_only; }
bool needs_structure(FusionMode m) { return m != FusionMode::seq_only; }

template <typename Scalar>
ParamSet<Scalar> init_projector_params(const ProjectorConfig& cfg, std::uint64_t seed, const std::string& label) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(seed, label));
  ParamSet<Scalar> set;
  for (int l = 0; l < cfg.depth; ++l) {
    const Eigen::Index in = l == 0 ? cfg.d_in : cfg.hidden;
    const Eigen::Index out = l == cfg.depth - 1 ? cfg.d_model : cfg.hidden;
    init::linear(set, "layer" + std::to_string(l), in, out, rng);
  }
  return set;
}

template <typename Scalar>
Var<Scalar> project(const Var<Scalar>& features, const ProjectorConfig& cfg, const BoundParams<Scalar>& params) {
  if (features.cols() != cfg.d_in) {
    throw ShapeError("projector expects width " + std::to_string(cfg.d_in) + ", got " +
                     std::to_string(features.cols()));
  }
  Var<Scalar> h = features;
  for (int l = 0; l < cfg.depth; ++l) {
    h = apply_linear(params, "layer" + std::to_string(l), h);
    if (l + 1 < cfg.depth) h = tanh(h);
  }
  return h;
}

namespace {

template <typename Scalar>
Matrix<Scalar> project_values(const ResidueFeatures<Scalar>& z, const ProjectorConfig& cfg,
                              const ParamSet<Scalar>& params) {
  Tape<Scalar> tape(false);
  BoundParams<Scalar> bound(tape, params, false);
  return project(tape.constant(z.values), cfg, bound).value();
}

}  // namespace

template <typename Scalar>
Matrix<Scalar> project_seq(const ResidueFeatures<Scalar>& z, const ProjectorConfig& cfg,
                           const ParamSet<Scalar>& params) {
  return project_values(z, cfg, params);
}

template <typename Scalar>
Matrix<Scalar> project_struct(const ResidueFeatures<Scalar>& z, const ProjectorConfig& cfg,
                              const ParamSet<Scalar>& params) {
  return project_values(z, cfg, params);
}

template <typename Scalar>
Var<Scalar> fuse(const std::optional<Var<Scalar>>& h_seq, const std::optional<Var<Scalar>>& h_struct,
                 FusionMode mode) {
  if (needs_sequence(mode) && !h_seq) throw std::invalid_argument("fusion mode " + to_string(mode) + " needs sequence features");
  if (needs_structure(mode) && !h_struct) {
    throw std::invalid_argument("fusion mode " + to_string(mode) + " needs structure features");
  }
  if (h_seq && h_struct && (h_seq->rows() != h_struct->rows() || h_seq->cols() != h_struct->cols())) {
    throw ShapeError("sequence and structure features disagree on length (" + std::to_string(h_seq->rows()) +
                     " vs " + std::to_string(h_struct->rows()) + ")");
  }
  switch (mode) {
    case FusionMode::add: return *h_seq + *h_struct;
    case FusionMode::concat_tokens: return concat_rows<Scalar>({*h_struct, *h_seq});
    case FusionMode::seq_only: return *h_seq;
    case FusionMode::struct_only: return *h_struct;
  }
  return *h_seq;
}

template <typename Scalar>
FusedProteinEmbedding<Scalar> fuse(const std::optional<Matrix<Scalar>>& h_seq,
                                   const std::optional<Matrix<Scalar>>& h_struct, FusionMode mode) {
  Tape<Scalar> tape(false);
  std::optional<Var<Scalar>> s, t;
  if (h_seq) s = tape.constant(*h_seq);
  if (h_struct) t = tape.constant(*h_struct);
  FusedProteinEmbedding<Scalar> out;
  out.values = fuse(s, t, mode).value();
  out.has_sequence = needs_sequence(mode);
  out.has_structure = needs_structure(mode);
  return out;
}

#define PROTFUSE_INSTANTIATE(S)                                                                                     \
  template ParamSet<S> init_projector_params<S>(const ProjectorConfig&, std::uint64_t, const std::string&);        \
  template Var<S> project<S>(const Var<S>&, const ProjectorConfig&, const BoundParams<S>&);                       \
  template Matrix<S> project_seq<S>(const ResidueFeatures<S>&, const ProjectorConfig&, const ParamSet<S>&);       \
  template Matrix<S> project_struct<S>(const ResidueFeatures<S>&, const ProjectorConfig&, const ParamSet<S>&);    \
  template Var<S> fuse<S>(const std::optional<Var<S>>&, const std::optional<Var<S>>&, FusionMode);                \
  template FusedProteinEmbedding<S> fuse<S>(const std::optional<Matrix<S>>&, const std::optional<Matrix<S>>&,     \
                                            FusionMode);
PROTFUSE_INSTANTIATE(float)
PROTFUSE_INSTANTIATE(double)
#undef PROTFUSE_INSTANTIATE

}  // namespace protfuse
