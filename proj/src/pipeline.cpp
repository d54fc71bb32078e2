#include "protfuse/pipeline.hpp"

#include "protfuse/param_set.hpp"
#include "protfuse/text_decoder.hpp"
#include "protfuse/text_io.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

namespace protfuse {

namespace fs = std::filesystem;

ProteinStore ProteinStore::load_directory(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("structure store '" + dir + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  ProteinStore store;
  for (const auto& path : files) {
    ProteinStructure s = load_structure_file(path.string());
    s.id = path.stem().string();
    store.add(std::move(s));
  }
  if (store.size() == 0) throw DataError("structure store '" + dir + "' is empty");
  return store;
}

void ProteinStore::add(ProteinStructure s) {
  const std::string id = s.id;
  if (!by_id_.emplace(id, std::move(s)).second) throw DataError("duplicate structure id '" + id + "'");
}

const ProteinStructure& ProteinStore::at(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw DataError("protein '" + id + "' is not in the structure store");
  return it->second;
}

DataInputs fixture_inputs(const std::string& fixture_dir) {
  return DataInputs{fixture_dir + "/structures", fixture_dir + "/annotations.tsv", fixture_dir + "/peer",
                    fixture_dir + "/molinst"};
}

namespace {

void require_ids(const ProteinStore& store, const std::vector<std::string>& ids) {
  for (const auto& id : ids) store.at(id);
}

}  // namespace

BuiltData build_data(const DataInputs& inputs, const ProteinStore& store, std::uint64_t seed,
                     const TemplateLibrary& lib) {
  BuiltData out;
  std::set<std::string> test_proteins;

  for (TaskTag task : kFinetuneTasks) {
    std::mt19937_64 rng(derive_seed(seed, "templates/" + to_string(task)));
    std::uniform_int_distribution<int> pick(0, 9);
    if (is_classification(task)) {
      const std::string path = inputs.peer_dir + "/" + to_string(task) + ".tsv";
      if (!fs::exists(path)) throw DataError("missing PEER manifest '" + path + "'");
      const PeerSplits splits = load_peer_splits(task, path);
      for (const auto& [part, target] :
           {std::pair{&splits.train, &out.train}, std::pair{&splits.validation, &out.validation},
            std::pair{&splits.test, &out.test}}) {
        for (const PeerInstance& inst : *part) {
          require_ids(store, inst.protein_ids);
          target->push_back(verbalize_peer(task, inst, pick(rng), lib));
          if (target == &out.test) test_proteins.insert(inst.protein_ids.begin(), inst.protein_ids.end());
        }
      }
    } else {
      const std::string path = inputs.molinst_dir + "/" + to_string(task) + ".jsonl";
      if (!fs::exists(path)) throw DataError("missing instruction file '" + path + "'");
      std::vector<InstructionExample> examples;
      int line_no = 0;
      for (const std::string& line : split(read_file(path), '\n')) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
          const auto j = nlohmann::json::parse(line);
          const std::string id = j.at("protein_id").get<std::string>();
          store.at(id);
          std::string answer = j.at("answer").get<std::string>();
          if (answer.empty()) throw DataError("empty answer");
          examples.push_back(InstructionExample{{id}, adapt_molinst_prompt(j.at("prompt").get<std::string>(), lib),
                                                std::move(answer), task});
        } catch (const nlohmann::json::exception& e) {
          throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
      }
      DatasetSplits splits = split_dataset(std::move(examples), derive_seed(seed, "split/" + to_string(task)));
      for (const auto& ex : splits.test) test_proteins.insert(ex.protein_ids.begin(), ex.protein_ids.end());
      out.train.insert(out.train.end(), splits.train.begin(), splits.train.end());
      out.validation.insert(out.validation.end(), splits.validation.begin(), splits.validation.end());
      out.test.insert(out.test.end(), splits.test.begin(), splits.test.end());
    }
  }

  if (!fs::exists(inputs.annotations)) throw DataError("missing annotation table '" + inputs.annotations + "'");
  const auto records = load_annotations(inputs.annotations);
  const auto kept = filter_leakage(records, std::vector<std::string>(test_proteins.begin(), test_proteins.end()));
  out.leakage_dropped = records.size() - kept.size();
  std::mt19937_64 rng(derive_seed(seed, "templates/description"));
  std::uniform_int_distribution<int> pick(0, 9);
  for (const auto& rec : kept) {
    store.at(rec.protein_id);
    out.projection.push_back(verbalize_description(rec, pick(rng), lib));
  }
  return out;
}

std::string count_summary(const std::vector<InstructionExample>& examples) {
  std::map<std::string, std::size_t> counts;
  for (const auto& ex : examples) ++counts[to_string(ex.task)];
  std::string out;
  for (const auto& [task, n] : counts) out += fmt::format("  {:<26} {:>6}\n", task, n);
  return out;
}

Corpus::Corpus(const std::vector<InstructionExample>& examples, const ProteinStore& store, const GraphConfig& graph)
    : source_(examples) {
  prepared_.reserve(source_.size());
  for (std::size_t i = 0; i < source_.size(); ++i) {
    const InstructionExample& ex = source_[i];
    PreparedExample p;
    p.id = fmt::format("{}:{}", to_string(ex.task), i);
    for (const auto& id : ex.protein_ids) {
      auto it = proteins_.find(id);
      if (it == proteins_.end()) {
        it = proteins_.emplace(id, std::make_unique<ProteinInput>(prepare_protein(store.at(id), graph))).first;
      }
      p.proteins.push_back(it->second.get());
    }
    p.question_ids = tokenize_text(ex.question);
    p.answer_ids = encode_text(ex.answer);
    prepared_.push_back(std::move(p));
  }
}

}  // namespace protfuse
