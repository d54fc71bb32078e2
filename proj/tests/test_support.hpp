#pragma once

#include "protfuse/fixtures.hpp"
#include "protfuse/model.hpp"
#include "protfuse/pipeline.hpp"
#include "protfuse/protein_io.hpp"

#include <memory>
#include <random>
#include <string>
#include <vector>

namespace protfuse::testing {

inline std::string data_path(const std::string& name) { return std::string(PROTFUSE_TEST_DATA) + "/" + name; }

/// Backbone with the given CA positions; N, C and O sit at fixed offsets.
inline ProteinStructure structure_from_ca(const std::string& sequence, const std::vector<Vec3>& ca) {
  ProteinStructure s;
  s.id = "test";
  for (std::size_t i = 0; i < ca.size(); ++i) {
    ResidueRecord r;
    r.aa_code = sequence[i];
    r.ca = ca[i];
    r.n = ca[i] + Vec3(-1.2, 0.5, 0.0);
    r.c = ca[i] + Vec3(1.2, 0.6, 0.2);
    r.o = ca[i] + Vec3(1.1, 1.8, 0.3);
    s.residues.push_back(r);
  }
  return s;
}

inline std::string random_sequence(std::size_t length, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, 19);
  std::string seq;
  for (std::size_t i = 0; i < length; ++i) seq += kCanonicalResidues[static_cast<std::size_t>(pick(rng))];
  return seq;
}

inline ProteinStructure random_structure(std::size_t length, std::uint64_t seed, bool helical = false) {
  std::mt19937_64 rng(seed);
  const std::string seq = random_sequence(length, rng);
  return synthetic_structure("rand", seq, helical, rng);
}

/// Small enough that a few hundred steps take seconds.
inline ModelConfig toy_model_config() {
  ModelConfig cfg;
  cfg.graph.k = 4;
  cfg.graph.rbf_count = 8;
  cfg.structure.d_struct = 8;
  cfg.structure.num_layers = 1;
  cfg.structure.edge_width = 8;
  cfg.sequence.d_seq = 8;
  cfg.sequence.num_layers = 1;
  cfg.sequence.num_heads = 2;
  cfg.decoder.d_model = 16;
  cfg.decoder.num_layers = 1;
  cfg.decoder.num_heads = 2;
  cfg.decoder.max_positions = 128;
  cfg.projector_hidden = 16;
  return cfg;
}

/// `n` proteins with ids T0..T{n-1} and one short solubility-style question
/// per protein whose answer depends on the protein index.
struct ToyData {
  ProteinStore store;
  std::vector<InstructionExample> examples;
  std::unique_ptr<Corpus> corpus;
};

inline ToyData toy_data(const ModelConfig& cfg, int n, std::uint64_t seed = 5) {
  ToyData d;
  for (int i = 0; i < n; ++i) {
    ProteinStructure s = random_structure(6 + static_cast<std::size_t>(i % 3), seed + static_cast<std::uint64_t>(i), i % 2 == 0);
    s.id = "T" + std::to_string(i);
    d.store.add(s);
    d.examples.push_back({{s.id}, "Soluble? <protein>", i % 2 ? "yes" : "no", TaskTag::solubility});
  }
  d.corpus = std::make_unique<Corpus>(d.examples, d.store, cfg.graph);
  return d;
}

}  // namespace protfuse::testing
