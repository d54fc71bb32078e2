#include "protfuse/instruction_data.hpp"

#include "protfuse/text_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <random>
#include <set>

namespace protfuse {

namespace {

struct TaskInfo {
  TaskTag tag;
  const char* name;
};

constexpr std::array<TaskInfo, 11> kTaskNames = {{
    {TaskTag::protein_function, "protein_function"},
    {TaskTag::catalytic_activity, "catalytic_activity"},
    {TaskTag::domain_motif, "domain_motif"},
    {TaskTag::functional_description, "functional_description"},
    {TaskTag::solubility, "solubility"},
    {TaskTag::subcellular_localization, "subcellular_localization"},
    {TaskTag::binary_localization, "binary_localization"},
    {TaskTag::fold_classification, "fold_classification"},
    {TaskTag::yeast_ppi, "yeast_ppi"},
    {TaskTag::human_ppi, "human_ppi"},
    {TaskTag::description, "description"},
}};

const std::array<const char*, 4> kClauseKeys = {"A.name:", "A.location:", "A.function:", "A.families:"};

std::string replace_all(std::string text, std::string_view from, std::string_view to) {
  if (from.empty()) return text;
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
  return text;
}

std::pair<std::string, std::string> split_slot(const std::string& tpl, std::string_view slot) {
  const std::size_t pos = tpl.find(slot);
  if (pos == std::string::npos) throw DataError("template '" + tpl + "' lacks the " + std::string(slot) + " slot");
  return {tpl.substr(0, pos), tpl.substr(pos + slot.size())};
}

bool is_residue_letter(char c) { return c >= 'A' && c <= 'Z'; }

bool is_residue_run(std::string_view token) {
  return !token.empty() && std::all_of(token.begin(), token.end(), is_residue_letter);
}

// Minimum residue letters for a trailing block to count as a sequence.
constexpr std::size_t kMinSequenceLetters = 10;

std::string strip_fasta(std::string_view prompt) {
  std::vector<std::string> lines = split(prompt, '\n');
  std::size_t letters = 0;
  bool removed_any = false;
  // Whole trailing lines: blank, code fences, FASTA headers, residue rows.
  while (!lines.empty()) {
    const std::string_view line = trim(lines.back());
    std::string compact;
    for (char c : line) {
      if (c != ' ') compact.push_back(c);
    }
    if (line.empty() || line == "```") {
      lines.pop_back();
      continue;
    }
    if (line.front() == '>' && removed_any) {
      lines.pop_back();
      continue;
    }
    if (is_residue_run(compact) && compact.size() >= 2 && lines.size() > 1) {
      letters += compact.size();
      removed_any = true;
      lines.pop_back();
      continue;
    }
    break;
  }
  std::string head;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) head += '\n';
    head += lines[i];
  }
  // Residue tokens at the end of the last remaining line.
  std::size_t cut = head.size();
  while (true) {
    std::size_t end = cut;
    while (end > 0 && head[end - 1] == ' ') --end;
    std::size_t begin = end;
    while (begin > 0 && head[begin - 1] != ' ' && head[begin - 1] != '\n') --begin;
    const std::string_view token(head.data() + begin, end - begin);
    if (begin == end || !is_residue_run(token) || token.size() < 2) break;
    letters += token.size();
    removed_any = true;
    cut = begin;
  }
  if (!removed_any || letters < kMinSequenceLetters) return std::string(trim(prompt));
  head.resize(cut);
  std::string out(trim(head));
  if (out.size() >= 3 && out.ends_with("```")) out = std::string(trim(out.substr(0, out.size() - 3)));
  return out;
}

}  // namespace

std::string to_string(TaskTag t) {
  for (const auto& info : kTaskNames) {
    if (info.tag == t) return info.name;
  }
  return "?";
}

TaskTag parse_task(const std::string& name) {
  for (const auto& info : kTaskNames) {
    if (name == info.name) return info.tag;
  }
  throw ConfigError("unknown task '" + name + "'");
}

bool is_classification(TaskTag t) {
  return std::find(kPeerTasks.begin(), kPeerTasks.end(), t) != kPeerTasks.end();
}

bool is_understanding(TaskTag t) {
  return t == TaskTag::protein_function || t == TaskTag::catalytic_activity || t == TaskTag::domain_motif ||
         t == TaskTag::functional_description;
}

int protein_arity(TaskTag t) { return t == TaskTag::yeast_ppi || t == TaskTag::human_ppi ? 2 : 1; }

const std::vector<std::string>& label_words(TaskTag t) {
  static const std::vector<std::string> solubility = {"insoluble", "soluble"};
  static const std::vector<std::string> localization = {
      "nucleus",       "cytoplasm",    "extracellular",         "mitochondrion",    "cell membrane",
      "endoplasmic reticulum", "plastid", "golgi apparatus", "lysosome/vacuole", "peroxisome"};
  static const std::vector<std::string> binary = {"membrane-bound", "soluble"};
  static const std::vector<std::string> ppi = {"do not interact", "interact"};
  static const std::vector<std::string> none;
  switch (t) {
    case TaskTag::solubility: return solubility;
    case TaskTag::subcellular_localization: return localization;
    case TaskTag::binary_localization: return binary;
    case TaskTag::yeast_ppi:
    case TaskTag::human_ppi: return ppi;
    default: return none;
  }
}

std::vector<std::string> all_labels(TaskTag t) {
  if (t == TaskTag::fold_classification) {
    std::vector<std::string> out;
    out.reserve(kFoldClassCount);
    for (int i = 0; i < kFoldClassCount; ++i) out.push_back(std::to_string(i));
    return out;
  }
  return label_words(t);
}

bool is_valid_label(TaskTag t, const std::string& label) {
  if (t == TaskTag::fold_classification) {
    if (label.empty() || label.size() > 4 || !std::all_of(label.begin(), label.end(), ::isdigit)) return false;
    if (label.size() > 1 && label[0] == '0') return false;
    return std::stoi(label) < kFoldClassCount;
  }
  const auto& words = label_words(t);
  return std::find(words.begin(), words.end(), label) != words.end();
}

std::size_t count_placeholders(std::string_view text) {
  std::size_t n = 0;
  for (std::size_t pos = text.find("<protein>"); pos != std::string_view::npos;
       pos = text.find("<protein>", pos + 1)) {
    ++n;
  }
  return n;
}

TaskTemplateSet parse_template_file(TaskTag task, std::string_view text) {
  TaskTemplateSet set;
  set.task = task;
  int line_no = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.starts_with("Q:")) {
      set.questions.emplace_back(trim(line.substr(2)));
    } else if (line.starts_with("A:")) {
      set.answer = std::string(trim(line.substr(2)));
    } else {
      bool matched = false;
      for (std::size_t c = 0; c < kClauseKeys.size(); ++c) {
        const std::string_view key = kClauseKeys[c];
        if (line.starts_with(key)) {
          set.clauses[c] = std::string(trim(line.substr(key.size())));
          matched = true;
        }
      }
      if (!matched) {
        throw DataError(to_string(task) + " templates, line " + std::to_string(line_no) + ": unrecognised entry");
      }
    }
  }
  if (set.questions.size() != 10) {
    throw DataError(to_string(task) + " templates: expected 10 questions, found " +
                    std::to_string(set.questions.size()));
  }
  const auto arity = static_cast<std::size_t>(protein_arity(task));
  for (const auto& q : set.questions) {
    if (count_placeholders(q) != arity) {
      throw DataError(to_string(task) + " template '" + q + "' must contain " + std::to_string(arity) +
                      " placeholder(s)");
    }
  }
  if (task == TaskTag::description) {
    for (const auto& c : set.clauses) split_slot(c, "{value}");
  } else {
    split_slot(set.answer, "{label}");
  }
  return set;
}

TemplateLibrary TemplateLibrary::load(const std::string& dir) {
  TemplateLibrary lib;
  lib.dir_ = dir;
  std::vector<TaskTag> tasks(kPeerTasks.begin(), kPeerTasks.end());
  tasks.push_back(TaskTag::description);
  for (TaskTag t : tasks) {
    const std::string path = dir + "/" + to_string(t) + ".txt";
    lib.sets_[t] = parse_template_file(t, read_file(path));
  }
  const std::string rules_path = dir + "/molinst_rules.tsv";
  if (std::filesystem::exists(rules_path)) {
    for (const std::string& raw : split(read_file(rules_path), '\n')) {
      if (trim(raw).empty() || raw.front() == '#') continue;
      const auto cols = split(raw, '\t');
      if (cols.size() != 2) throw DataError("molinst_rules.tsv: expected 2 tab-separated columns in '" + raw + "'");
      lib.molinst_rules_.emplace_back(cols[0], std::string(trim(cols[1])));
    }
  }
  return lib;
}

const TemplateLibrary& TemplateLibrary::bundled() {
  static const TemplateLibrary lib = load(std::string(PROTFUSE_DATA_DIR) + "/templates");
  return lib;
}

const TaskTemplateSet& TemplateLibrary::templates(TaskTag t) const {
  auto it = sets_.find(t);
  if (it == sets_.end()) throw DataError("no templates for task " + to_string(t));
  return it->second;
}

InstructionExample verbalize_description(const AnnotationRecord& rec, int template_id, const TemplateLibrary& lib) {
  const TaskTemplateSet& set = lib.templates(TaskTag::description);
  if (template_id < 0 || template_id >= static_cast<int>(set.questions.size())) {
    throw std::out_of_range("template id " + std::to_string(template_id) + " out of range");
  }
  const std::array<const std::string*, 4> fields = {&rec.name, &rec.subcellular_location, &rec.function_text,
                                                    &rec.families};
  std::string answer;
  for (std::size_t c = 0; c < fields.size(); ++c) {
    if (fields[c]->empty()) continue;
    if (!answer.empty()) answer += ' ';
    answer += replace_all(set.clauses[c], "{value}", *fields[c]);
  }
  if (answer.empty()) throw DataError("annotation record '" + rec.protein_id + "' has no fields to describe");
  return InstructionExample{{rec.protein_id}, set.questions[static_cast<std::size_t>(template_id)], answer,
                            TaskTag::description};
}

AnnotationRecord extract_description_fields(std::string_view answer, const TemplateLibrary& lib) {
  const TaskTemplateSet& set = lib.templates(TaskTag::description);
  std::array<std::pair<std::string, std::string>, 4> parts;
  for (std::size_t c = 0; c < 4; ++c) parts[c] = split_slot(set.clauses[c], "{value}");
  std::array<std::string, 4> values;
  std::string_view rest = answer;
  std::size_t c = 0;
  while (!rest.empty()) {
    while (c < 4 && !rest.starts_with(parts[c].first)) ++c;
    if (c == 4) throw DataError("description answer does not follow the clause templates");
    rest.remove_prefix(parts[c].first.size());
    // The value ends at the first suffix occurrence that is followed by the end
    // of the text or by a later clause.
    const std::string& suffix = parts[c].second;
    std::size_t end = std::string_view::npos;
    for (std::size_t pos = rest.find(suffix); pos != std::string_view::npos; pos = rest.find(suffix, pos + 1)) {
      const std::string_view after = rest.substr(pos + suffix.size());
      bool ok = after.empty();
      for (std::size_t n = c + 1; n < 4 && !ok; ++n) {
        ok = after.size() > 1 && after.front() == ' ' && after.substr(1).starts_with(parts[n].first);
      }
      if (ok) {
        end = pos;
        break;
      }
    }
    if (end == std::string_view::npos) throw DataError("unterminated clause in description answer");
    values[c] = std::string(rest.substr(0, end));
    rest.remove_prefix(end + suffix.size());
    if (!rest.empty()) rest.remove_prefix(1);
    ++c;
  }
  return AnnotationRecord{"", values[0], values[1], values[2], values[3]};
}

InstructionExample verbalize_peer(TaskTag task, const PeerInstance& instance, int template_id,
                                  const TemplateLibrary& lib) {
  if (!is_classification(task)) throw DataError(to_string(task) + " is not a PEER classification task");
  if (!is_valid_label(task, instance.label)) {
    throw DataError("unknown label '" + instance.label + "' for task " + to_string(task));
  }
  if (instance.protein_ids.size() != static_cast<std::size_t>(protein_arity(task))) {
    throw DataError(to_string(task) + " expects " + std::to_string(protein_arity(task)) + " protein(s), got " +
                    std::to_string(instance.protein_ids.size()));
  }
  const TaskTemplateSet& set = lib.templates(task);
  if (template_id < 0 || template_id >= static_cast<int>(set.questions.size())) {
    throw std::out_of_range("template id " + std::to_string(template_id) + " out of range");
  }
  return InstructionExample{instance.protein_ids, set.questions[static_cast<std::size_t>(template_id)],
                            replace_all(set.answer, "{label}", instance.label), task};
}

std::string adapt_molinst_prompt(std::string_view prompt, const TemplateLibrary& lib) {
  std::string out = strip_fasta(prompt);
  for (const auto& [from, to] : lib.molinst_rules()) out = replace_all(std::move(out), from, to);
  if (count_placeholders(out) == 0) {
    if (!out.empty()) out += ' ';
    out += "<protein>";
  }
  return out;
}

DatasetSplits split_dataset(std::vector<InstructionExample> examples, std::uint64_t seed) {
  if (examples.size() < 10) {
    throw DataError("split_dataset needs at least 10 examples, got " + std::to_string(examples.size()));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(examples.begin(), examples.end(), rng);
  const std::size_t n = examples.size();
  const std::size_t held = n / 10;
  const std::size_t train = n - 2 * held;
  DatasetSplits out;
  out.train.assign(std::make_move_iterator(examples.begin()), std::make_move_iterator(examples.begin() + train));
  out.validation.assign(std::make_move_iterator(examples.begin() + train),
                        std::make_move_iterator(examples.begin() + train + held));
  out.test.assign(std::make_move_iterator(examples.begin() + train + held), std::make_move_iterator(examples.end()));
  return out;
}

PeerSplits parse_peer_manifest(TaskTag task, std::string_view text) {
  if (!is_classification(task)) throw DataError(to_string(task) + " has no PEER manifest");
  PeerSplits out;
  int line_no = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++line_no;
    std::string line(trim(raw));
    if (line.empty() || line.front() == '#') continue;
    if (line_no == 1 && line.starts_with("protein_id")) continue;
    const auto cols = split(raw.back() == '\r' ? raw.substr(0, raw.size() - 1) : raw, '\t');
    const std::string where = "manifest line " + std::to_string(line_no);
    if (cols.size() != 3) throw DataError(where + ": expected 3 tab-separated columns");
    PeerInstance inst;
    for (const std::string& id : split(cols[0], ',')) {
      const std::string_view t = trim(id);
      if (t.empty()) throw DataError(where + ": empty protein id");
      inst.protein_ids.emplace_back(t);
    }
    if (inst.protein_ids.size() != static_cast<std::size_t>(protein_arity(task))) {
      throw DataError(where + ": " + to_string(task) + " expects " + std::to_string(protein_arity(task)) +
                      " protein id(s)");
    }
    inst.label = std::string(trim(cols[1]));
    if (!is_valid_label(task, inst.label)) throw DataError(where + ": unknown label '" + inst.label + "'");
    inst.split = std::string(trim(cols[2]));
    if (inst.split == "train") {
      out.train.push_back(std::move(inst));
    } else if (inst.split == "valid" || inst.split == "validation") {
      out.validation.push_back(std::move(inst));
    } else if (inst.split == "test") {
      out.test.push_back(std::move(inst));
    } else {
      throw DataError(where + ": unknown split '" + inst.split + "'");
    }
  }
  return out;
}

PeerSplits load_peer_splits(TaskTag task, const std::string& manifest_path) {
  return parse_peer_manifest(task, read_file(manifest_path));
}

SplitCounts reference_peer_counts(TaskTag task) {
  switch (task) {
    case TaskTag::solubility: return {62478, 6942, 1999};
    case TaskTag::subcellular_localization: return {8420, 2811, 2773};
    case TaskTag::binary_localization: return {5184, 1749, 1749};
    case TaskTag::fold_classification: return {12312, 736, 718};
    case TaskTag::yeast_ppi: return {9890, 190, 788};
    case TaskTag::human_ppi: return {71338, 630, 474};
    default: throw DataError(to_string(task) + " has no PEER reference counts");
  }
}

std::vector<AnnotationRecord> filter_leakage(const std::vector<AnnotationRecord>& records,
                                             const std::vector<std::string>& excluded) {
  const std::set<std::string> drop(excluded.begin(), excluded.end());
  std::vector<AnnotationRecord> out;
  for (const auto& r : records) {
    if (drop.count(r.protein_id) == 0) out.push_back(r);
  }
  return out;
}

std::vector<AnnotationRecord> load_annotations(const std::string& path) {
  std::vector<AnnotationRecord> out;
  int line_no = 0;
  for (std::string raw : split(read_file(path), '\n')) {
    ++line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (trim(raw).empty() || raw.front() == '#') continue;
    if (line_no == 1 && raw.starts_with("protein_id")) continue;
    const auto cols = split(raw, '\t');
    if (cols.size() != 5) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected 5 tab-separated columns");
    }
    if (trim(cols[0]).empty()) throw DataError(path + ":" + std::to_string(line_no) + ": empty protein id");
    out.push_back(AnnotationRecord{std::string(trim(cols[0])), std::string(trim(cols[1])),
                                   std::string(trim(cols[2])), std::string(trim(cols[3])),
                                   std::string(trim(cols[4]))});
  }
  return out;
}

std::string dataset_to_jsonl(const std::vector<InstructionExample>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    nlohmann::ordered_json j;
    j["protein_ids"] = ex.protein_ids;
    j["question"] = ex.question;
    j["answer"] = ex.answer;
    j["task_tag"] = to_string(ex.task);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<InstructionExample> dataset_from_jsonl(std::string_view text) {
  std::vector<InstructionExample> out;
  int line_no = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++line_no;
    if (trim(raw).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(raw);
      InstructionExample ex;
      ex.protein_ids = j.at("protein_ids").get<std::vector<std::string>>();
      ex.question = j.at("question").get<std::string>();
      ex.answer = j.at("answer").get<std::string>();
      ex.task = parse_task(j.at("task_tag").get<std::string>());
      if (count_placeholders(ex.question) != ex.protein_ids.size()) {
        throw DataError("placeholder count does not match protein_ids");
      }
      if (ex.answer.empty()) throw DataError("empty answer");
      out.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("dataset line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::runtime_error& e) {
      throw DataError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void save_dataset(const std::vector<InstructionExample>& examples, const std::string& path) {
  write_file(path, dataset_to_jsonl(examples));
}

std::vector<InstructionExample> load_dataset(const std::string& path) { return dataset_from_jsonl(read_file(path)); }

}  // namespace protfuse
