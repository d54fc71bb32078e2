#pragma once

#include "protfuse/instruction_data.hpp"
#include "protfuse/protein_io.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace protfuse {

struct FixtureConfig {
  std::size_t num_proteins = 48;
  int min_length = 8;
  int max_length = 14;
  /// PEER instances per split and task.
  std::size_t peer_per_split = 30;
  std::uint64_t seed = 17;
};

/// Understanding-task record before prompt adaptation: the prompt still ends
/// in a FASTA block.
struct MolInstRecord {
  std::string protein_id;
  std::string prompt;
  std::string answer;
};

struct FixtureSet {
  std::vector<ProteinStructure> structures;
  /// Hidden family of each protein (same order as structures); every label
  /// and answer is a function of it.
  std::vector<int> families;
  std::vector<AnnotationRecord> annotations;
  std::map<TaskTag, PeerSplits> peer;
  std::map<TaskTag, std::vector<MolInstRecord>> molinst;
};

inline constexpr int kFixtureFamilies = 4;

/// Backbone for `sequence`: a helix for helical families, otherwise a
/// self-avoiding-ish random coil, with CA-CA spacing of 3.8 Å.
ProteinStructure synthetic_structure(const std::string& id, const std::string& sequence, bool helical,
                                     std::mt19937_64& rng);

FixtureSet generate_fixtures(const FixtureConfig& cfg);

/// Writes structures/<id>.pdb, annotations.tsv, peer/<task>.tsv and
/// molinst/<task>.jsonl under `dir`.
void write_fixtures(const FixtureSet& fx, const std::string& dir);

}  // namespace protfuse
