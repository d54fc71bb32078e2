#include "protfuse/model.hpp"

#include <optional>

namespace protfuse {

std::string to_string(Partition p) {
  switch (p) {
    case Partition::struct_encoder: return "struct_encoder";
    case Partition::seq_encoder: return "seq_encoder";
    case Partition::proj_struct: return "proj_struct";
    case Partition::proj_seq: return "proj_seq";
    case Partition::decoder: return "decoder";
    case Partition::embed_table: return "embed_table";
  }
  return "?";
}

Partition parse_partition(const std::string& name) {
  for (Partition p : kAllPartitions) {
    if (to_string(p) == name) return p;
  }
  throw ConfigError("unknown parameter partition '" + name + "'");
}

ProjectorConfig ModelConfig::seq_projector() const {
  return ProjectorConfig{sequence.d_seq, decoder.d_model, projector_hidden, projector_depth};
}

ProjectorConfig ModelConfig::struct_projector() const {
  return ProjectorConfig{structure.d_struct, decoder.d_model, projector_hidden, projector_depth};
}

Eigen::Index ModelConfig::protein_tokens(Eigen::Index residues) const {
  return fusion == FusionMode::concat_tokens ? 2 * residues : residues;
}

void ModelConfig::validate() const {
  structure.validate();
  sequence.validate();
  decoder.validate();
  seq_projector().validate();
  struct_projector().validate();
  if (graph.k < 1) throw ConfigError("graph.k must be >= 1");
  if (graph.rbf_count != structure.edge_width) {
    throw ConfigError("graph.rbf_count must equal structure.edge_width");
  }
}

template <typename Scalar>
ModelParams<Scalar> init_model_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams<Scalar> out;
  out[Partition::struct_encoder] = init_structure_params<Scalar>(cfg.structure, seed);
  out[Partition::seq_encoder] = init_sequence_params<Scalar>(cfg.sequence, seed);
  out[Partition::proj_struct] = init_projector_params<Scalar>(cfg.struct_projector(), seed, "proj_struct");
  out[Partition::proj_seq] = init_projector_params<Scalar>(cfg.seq_projector(), seed, "proj_seq");
  out[Partition::decoder] = init_decoder_params<Scalar>(cfg.decoder, seed);
  out[Partition::embed_table] = init_embed_table<Scalar>(cfg.decoder, seed);
  return out;
}

ProteinInput prepare_protein(const ProteinStructure& s, const GraphConfig& cfg) {
  return ProteinInput{s.id, build_residue_graph(s, cfg.k, cfg.rbf_count), tokenize_residues(derive_sequence(s))};
}

template <typename Scalar>
BoundModel<Scalar>::BoundModel(Tape<Scalar>& tape, const ModelParams<Scalar>& params, const PartitionSet& trainable) {
  for (Partition p : kAllPartitions) {
    parts_[static_cast<std::size_t>(p)] = BoundParams<Scalar>(tape, params[p], trainable.count(p) != 0);
  }
}

template <typename Scalar>
void BoundModel<Scalar>::accumulate_into(ModelParams<Scalar>& grads) const {
  for (Partition p : kAllPartitions) parts_[static_cast<std::size_t>(p)].accumulate_into(grads[p]);
}

template <typename Scalar>
Var<Scalar> protein_embedding(Tape<Scalar>& tape, const ModelConfig& cfg, const BoundModel<Scalar>& model,
                              const ProteinInput& protein) {
  std::optional<Var<Scalar>> h_seq, h_struct;
  if (needs_sequence(cfg.fusion)) {
    const Var<Scalar> z = encode_sequence(tape, protein.tokens, cfg.sequence, model[Partition::seq_encoder]);
    h_seq = project(z, cfg.seq_projector(), model[Partition::proj_seq]);
  }
  if (needs_structure(cfg.fusion)) {
    const Var<Scalar> z = encode_structure(tape, protein.graph, cfg.structure, model[Partition::struct_encoder]);
    h_struct = project(z, cfg.struct_projector(), model[Partition::proj_struct]);
  }
  return fuse(h_seq, h_struct, cfg.fusion);
}

template <typename Scalar>
Matrix<Scalar> protein_embedding(const ModelConfig& cfg, const ModelParams<Scalar>& params,
                                 const ProteinInput& protein) {
  Tape<Scalar> tape(false);
  BoundModel<Scalar> model(tape, params, {});
  return protein_embedding(tape, cfg, model, protein).value();
}

template <typename Scalar>
Scalar example_loss(const ModelConfig& cfg, const ModelParams<Scalar>& params, const PreparedExample& example,
                    ModelParams<Scalar>* grads, const PartitionSet& grad_partitions, Scalar grad_scale) {
  const bool want_grads = grads != nullptr && !grad_partitions.empty();
  Tape<Scalar> tape(want_grads);
  BoundModel<Scalar> model(tape, params, want_grads ? grad_partitions : PartitionSet{});
  std::vector<Var<Scalar>> proteins;
  proteins.reserve(example.proteins.size());
  for (const ProteinInput* p : example.proteins) proteins.push_back(protein_embedding(tape, cfg, model, *p));
  const SplicedInput<Scalar> input =
      assemble(example.question_ids, proteins, example.answer_ids, cfg.decoder, model[Partition::embed_table]);
  Var<Scalar> loss = forward_loss(input, cfg.decoder, model[Partition::decoder]);
  const Scalar value = loss.value()(0, 0);
  if (want_grads) {
    tape.backward(grad_scale == Scalar(1) ? loss : loss * grad_scale);
    model.accumulate_into(*grads);
  }
  return value;
}

template <typename Scalar>
Scalar text_lm_loss(const ModelConfig& cfg, const ModelParams<Scalar>& params, const PreparedExample& example,
                    ModelParams<Scalar>* grads, const PartitionSet& grad_partitions, Scalar grad_scale) {
  const bool want_grads = grads != nullptr && !grad_partitions.empty();
  Tape<Scalar> tape(want_grads);
  BoundModel<Scalar> model(tape, params, want_grads ? grad_partitions : PartitionSet{});
  // Each placeholder becomes as many PROTEIN rows as the protein will occupy
  // once spliced, so text positions line up with the multimodal layout.
  std::vector<int> ids;
  std::size_t next_protein = 0;
  std::span<const int> question = example.question_ids;
  if (!question.empty() && question.back() == text_vocab::kEos) question = question.first(question.size() - 1);
  for (int id : question) {
    if (id == text_vocab::kProtein && next_protein < example.proteins.size()) {
      const Eigen::Index n = cfg.protein_tokens(example.proteins[next_protein++]->length());
      ids.insert(ids.end(), static_cast<std::size_t>(n), text_vocab::kProtein);
    } else {
      ids.push_back(id);
    }
  }
  ids.insert(ids.end(), example.answer_ids.begin(), example.answer_ids.end());
  ids.push_back(text_vocab::kEos);
  const auto T = static_cast<Eigen::Index>(ids.size());
  std::vector<Eigen::Index> idx(ids.begin(), ids.end());
  const Var<Scalar> rows = gather_rows(model[Partition::embed_table]["tokens"], std::move(idx));
  std::vector<int> targets(static_cast<std::size_t>(T), -1);
  std::vector<Scalar> weights(static_cast<std::size_t>(T), Scalar(0));
  std::size_t counted = 0;
  for (Eigen::Index t = 0; t + 1 < T; ++t) counted += ids[static_cast<std::size_t>(t + 1)] != text_vocab::kProtein;
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const int next = ids[static_cast<std::size_t>(t + 1)];
    if (next == text_vocab::kProtein) continue;
    targets[static_cast<std::size_t>(t)] = next;
    weights[static_cast<std::size_t>(t)] = Scalar(1) / static_cast<Scalar>(counted);
  }
  Var<Scalar> loss = weighted_cross_entropy(decoder_logits(rows, cfg.decoder, model[Partition::decoder]),
                                            std::move(targets), std::move(weights));
  const Scalar value = loss.value()(0, 0);
  if (want_grads) {
    tape.backward(grad_scale == Scalar(1) ? loss : loss * grad_scale);
    model.accumulate_into(*grads);
  }
  return value;
}

template <typename Scalar>
std::vector<int> generate_answer(const ModelConfig& cfg, const ModelParams<Scalar>& params,
                                 std::span<const int> question_ids, const std::vector<const ProteinInput*>& proteins,
                                 int max_new_tokens) {
  std::vector<Matrix<Scalar>> rows;
  rows.reserve(proteins.size());
  for (const ProteinInput* p : proteins) rows.push_back(protein_embedding(cfg, params, *p));
  return generate(question_ids, rows, cfg.decoder, params[Partition::decoder], params[Partition::embed_table],
                  max_new_tokens);
}

#define PROTFUSE_INSTANTIATE(S)                                                                                     \
  template class BoundModel<S>;                                                                                     \
  template ModelParams<S> init_model_params<S>(const ModelConfig&, std::uint64_t);                                 \
  template Var<S> protein_embedding<S>(Tape<S>&, const ModelConfig&, const BoundModel<S>&, const ProteinInput&);   \
  template Matrix<S> protein_embedding<S>(const ModelConfig&, const ModelParams<S>&, const ProteinInput&);         \
  template S example_loss<S>(const ModelConfig&, const ModelParams<S>&, const PreparedExample&, ModelParams<S>*,   \
                             const PartitionSet&, S);                                                               \
  template S text_lm_loss<S>(const ModelConfig&, const ModelParams<S>&, const PreparedExample&, ModelParams<S>*,   \
                             const PartitionSet&, S);                                                               \
  template std::vector<int> generate_answer<S>(const ModelConfig&, const ModelParams<S>&, std::span<const int>,    \
                                               const std::vector<const ProteinInput*>&, int);
PROTFUSE_INSTANTIATE(float)
PROTFUSE_INSTANTIATE(double)
#undef PROTFUSE_INSTANTIATE

}  // namespace protfuse
