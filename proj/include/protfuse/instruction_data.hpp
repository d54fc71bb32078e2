#pragma once

#include "protfuse/types.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace protfuse {

/// Ten fine-tuning tasks plus the projection-tuning description task.
enum class TaskTag {
  protein_function,
  catalytic_activity,
  domain_motif,
  functional_description,
  solubility,
  subcellular_localization,
  binary_localization,
  fold_classification,
  yeast_ppi,
  human_ppi,
  description,
};

inline constexpr std::array<TaskTag, 10> kFinetuneTasks = {
    TaskTag::protein_function,    TaskTag::catalytic_activity,       TaskTag::domain_motif,
    TaskTag::functional_description, TaskTag::solubility,            TaskTag::subcellular_localization,
    TaskTag::binary_localization, TaskTag::fold_classification,      TaskTag::yeast_ppi,
    TaskTag::human_ppi,
};

inline constexpr std::array<TaskTag, 6> kPeerTasks = {
    TaskTag::solubility,          TaskTag::subcellular_localization, TaskTag::binary_localization,
    TaskTag::fold_classification, TaskTag::yeast_ppi,                TaskTag::human_ppi,
};

inline constexpr int kFoldClassCount = 1195;

std::string to_string(TaskTag t);
TaskTag parse_task(const std::string& name);
bool is_classification(TaskTag t);
/// Scored by ROUGE-L (the four free-text understanding tasks).
bool is_understanding(TaskTag t);
/// Proteins per example: 2 for the PPI tasks, otherwise 1.
int protein_arity(TaskTag t);

/// Natural-language category words of a classification task. Fold
/// classification has no word list; its labels are the integers 0..1194.
const std::vector<std::string>& label_words(TaskTag t);
/// All labels of a classification task, fold included.
std::vector<std::string> all_labels(TaskTag t);
bool is_valid_label(TaskTag t, const std::string& label);

struct AnnotationRecord {
  std::string protein_id;
  std::string name;
  std::string subcellular_location;
  std::string function_text;
  std::string families;
};

struct InstructionExample {
  std::vector<std::string> protein_ids;
  std::string question;
  std::string answer;
  TaskTag task = TaskTag::description;

  friend bool operator==(const InstructionExample&, const InstructionExample&) = default;
};

std::size_t count_placeholders(std::string_view text);

struct TaskTemplateSet {
  TaskTag task = TaskTag::description;
  std::vector<std::string> questions;
  /// PEER tasks: one template containing "{label}". Description: the answer
  /// is assembled from `clauses` instead.
  std::string answer;
  /// Description only: name, location, function, families clause templates,
  /// each containing "{value}".
  std::array<std::string, 4> clauses;
};

/// Question/answer templates and the prompt-rewrite table, read from a data
/// directory laid out as <dir>/<task>.txt plus <dir>/molinst_rules.tsv.
class TemplateLibrary {
 public:
  static TemplateLibrary load(const std::string& dir);
  /// The library shipped with the repository.
  static const TemplateLibrary& bundled();

  const TaskTemplateSet& templates(TaskTag t) const;
  const std::vector<std::pair<std::string, std::string>>& molinst_rules() const { return molinst_rules_; }
  const std::string& directory() const { return dir_; }

 private:
  std::string dir_;
  std::map<TaskTag, TaskTemplateSet> sets_;
  std::vector<std::pair<std::string, std::string>> molinst_rules_;
};

/// Parses one template file. Lines: "Q: ..." (question), "A: ..." (answer),
/// "A.name:", "A.location:", "A.function:", "A.families:" (description
/// clauses); blank lines and lines starting with '#' are ignored.
TaskTemplateSet parse_template_file(TaskTag task, std::string_view text);

/// Description pair for the projection-tuning stage. Missing fields drop their
/// clause; throws DataError if every field is empty.
InstructionExample verbalize_description(const AnnotationRecord& rec, int template_id,
                                         const TemplateLibrary& lib = TemplateLibrary::bundled());

/// Inverse of the description answer: recovers name, location, function and
/// families from the rendered answer (protein_id is left empty).
AnnotationRecord extract_description_fields(std::string_view answer,
                                            const TemplateLibrary& lib = TemplateLibrary::bundled());

struct PeerInstance {
  std::vector<std::string> protein_ids;
  std::string label;
  std::string split;
};

/// Throws DataError on an unknown label or a protein count that does not
/// match the task.
InstructionExample verbalize_peer(TaskTag task, const PeerInstance& instance, int template_id,
                                  const TemplateLibrary& lib = TemplateLibrary::bundled());

/// Removes an appended FASTA sequence block, applies the rewrite table and
/// appends " <protein>" unless the prompt already carries a placeholder.
std::string adapt_molinst_prompt(std::string_view prompt,
                                 const TemplateLibrary& lib = TemplateLibrary::bundled());

struct DatasetSplits {
  std::vector<InstructionExample> train;
  std::vector<InstructionExample> validation;
  std::vector<InstructionExample> test;
};

/// Seeded shuffle then contiguous 8:1:1 slicing (validation and test get
/// floor(n/10) each). Throws DataError below 10 examples.
DatasetSplits split_dataset(std::vector<InstructionExample> examples, std::uint64_t seed);

struct PeerSplits {
  std::vector<PeerInstance> train;
  std::vector<PeerInstance> validation;
  std::vector<PeerInstance> test;
};

/// Reads a tab-separated manifest: protein_id(s) (comma separated for PPI),
/// label, split in {train, valid, test}. A header line starting with
/// "protein_id" is allowed. Throws DataError on schema violations.
PeerSplits load_peer_splits(TaskTag task, const std::string& manifest_path);
PeerSplits parse_peer_manifest(TaskTag task, std::string_view text);

/// Split sizes reported for the real PEER benchmark.
struct SplitCounts {
  std::size_t train, validation, test;
  friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};
SplitCounts reference_peer_counts(TaskTag task);

/// Drops annotation records whose protein id appears in `excluded`.
std::vector<AnnotationRecord> filter_leakage(const std::vector<AnnotationRecord>& records,
                                             const std::vector<std::string>& excluded);

/// Tab-separated annotation table: protein_id, name, location, function,
/// families (empty cells allowed).
std::vector<AnnotationRecord> load_annotations(const std::string& path);

/// Line-delimited JSON records {protein_ids, question, answer, task_tag}.
std::string dataset_to_jsonl(const std::vector<InstructionExample>& examples);
std::vector<InstructionExample> dataset_from_jsonl(std::string_view text);
void save_dataset(const std::vector<InstructionExample>& examples, const std::string& path);
std::vector<InstructionExample> load_dataset(const std::string& path);

}  // namespace protfuse
