#pragma once

#include "protfuse/types.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace protfuse {

/// Backbone atoms of one residue, coordinates in Ångström.
struct ResidueRecord {
  char aa_code = 'X';
  Vec3 n = Vec3::Zero();
  Vec3 ca = Vec3::Zero();
  Vec3 c = Vec3::Zero();
  Vec3 o = Vec3::Zero();
};

struct ProteinStructure {
  std::string id;
  std::vector<ResidueRecord> residues;
  /// Residues seen in the source file but missing at least one backbone atom.
  std::size_t dropped_residues = 0;

  std::size_t length() const { return residues.size(); }
};

/// k-nearest-neighbour graph over CA atoms. Row-major edge layout: edge
/// (i, slot) lives at row i * k + slot of `edge_features`.
struct ResidueGraph {
  Eigen::Index num_residues = 0;
  Eigen::Index k = 0;
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> neighbor_index;  // L x k
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> valid;                  // L x k, false on padding
  Eigen::MatrixXd distance;                                                  // L x k, CA-CA in Å
  Eigen::MatrixXd edge_features;                                             // (L*k) x rbf_count

  Eigen::Index edge_width() const { return edge_features.cols(); }
  Eigen::Index valid_count(Eigen::Index i) const { return valid.row(i).count(); }
};

inline constexpr std::string_view kCanonicalResidues = "ACDEFGHIKLMNPQRSTVWY";

/// Three-letter residue name to one-letter code; anything unrecognised is 'X'.
char three_to_one(std::string_view name);
std::string one_to_three(char code);

/// Parses the ATOM records of a single-chain PDB document. Residues lacking any
/// of N, CA, C, O are dropped and counted. Throws DataError on malformed
/// records (with the 1-based line number), multiple chains, or when no
/// complete residue remains.
ProteinStructure parse_structure(std::string_view text, std::string id = {});

/// Line-oriented cache format: a header line, then per residue the one-letter
/// code followed by 12 coordinates (N, CA, C, O) printed with 3 decimals.
std::string serialize_structure(const ProteinStructure& s);
ProteinStructure deserialize_structure(std::string_view text);

/// Renders backbone ATOM records; used by the fixture generator.
std::string write_pdb(const ProteinStructure& s);

std::string derive_sequence(const ProteinStructure& s);

ResidueGraph build_residue_graph(const ProteinStructure& s, int k, int rbf_count);

/// Gaussian radial basis of `distance` with centres evenly spaced on [2, 22] Å.
Eigen::RowVectorXd rbf_encode(double distance, int rbf_count);

ProteinStructure load_structure_file(const std::string& path);
void save_structure_file(const ProteinStructure& s, const std::string& path);

}  // namespace protfuse
