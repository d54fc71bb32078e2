#pragma once

#include "protfuse/instruction_data.hpp"
#include "protfuse/model.hpp"

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace protfuse {

/// Structures keyed by protein id. Files in the directory may be PDB text or
/// the serialized cache format; the id is the file stem.
class ProteinStore {
 public:
  static ProteinStore load_directory(const std::string& dir);
  void add(ProteinStructure s);
  const ProteinStructure& at(const std::string& id) const;
  bool contains(const std::string& id) const { return by_id_.count(id) != 0; }
  std::size_t size() const { return by_id_.size(); }
  const std::map<std::string, ProteinStructure>& all() const { return by_id_; }

 private:
  std::map<std::string, ProteinStructure> by_id_;
};

struct DataInputs {
  std::string structures_dir;
  std::string annotations;  // TSV
  std::string peer_dir;     // <task>.tsv manifests
  std::string molinst_dir;  // <task>.jsonl records
};

/// Conventional layout produced by the fixtures generator.
DataInputs fixture_inputs(const std::string& fixture_dir);

struct BuiltData {
  std::vector<InstructionExample> projection;
  std::vector<InstructionExample> train;
  std::vector<InstructionExample> validation;
  std::vector<InstructionExample> test;
  std::size_t leakage_dropped = 0;
};

/// Verbalizes every input into the projection-tuning set and the fine-tuning
/// splits. Description records for proteins used by any downstream test split
/// are excluded. Deterministic in `seed`. Throws DataError on missing inputs.
BuiltData build_data(const DataInputs& inputs, const ProteinStore& store, std::uint64_t seed,
                     const TemplateLibrary& lib = TemplateLibrary::bundled());

/// Per-task example counts, one line per task.
std::string count_summary(const std::vector<InstructionExample>& examples);

/// Examples converted to decoder inputs; owns the prepared proteins so the
/// PreparedExample pointers stay valid.
class Corpus {
 public:
  Corpus(const std::vector<InstructionExample>& examples, const ProteinStore& store, const GraphConfig& graph);

  const std::vector<PreparedExample>& examples() const { return prepared_; }
  const std::vector<InstructionExample>& source() const { return source_; }
  const ProteinInput& protein(const std::string& id) const { return *proteins_.at(id); }
  std::size_t size() const { return prepared_.size(); }

 private:
  std::vector<InstructionExample> source_;
  std::map<std::string, std::unique_ptr<ProteinInput>> proteins_;
  std::vector<PreparedExample> prepared_;
};

}  // namespace protfuse
