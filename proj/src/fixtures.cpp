#include "protfuse/fixtures.hpp"

#include "protfuse/param_set.hpp"
#include "protfuse/text_io.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <numbers>

namespace protfuse {

namespace {

struct Family {
  const char* residues;  // preferred residues, drawn 80% of the time
  bool helical;
  const char* name;
  const char* location;
  const char* function_text;
  const char* reaction;
  const char* domains;
  const char* description;
  const char* solubility;
  const char* binary_location;
  const char* subcellular;
};

const std::array<Family, kFixtureFamilies> kFamilies = {{
    {"AILMFVW", true, "Membrane transporter", "cell membrane", "transports small solutes across the membrane",
     "ATP + H2O + solute(out) = ADP + phosphate + solute(in)", "ABC transporter domain, Walker A motif",
     "Transports solutes across the cell membrane. Involved in nutrient uptake.", "insoluble", "membrane-bound",
     "cell membrane"},
    {"DEKRH", false, "DNA-binding regulator", "nucleus", "binds DNA and regulates transcription",
     "S-adenosyl-L-methionine + DNA = S-adenosyl-L-homocysteine + methylated DNA", "Homeobox domain, zinc finger",
     "Binds DNA in a sequence-specific manner. Regulates transcription of target genes.", "soluble", "soluble",
     "nucleus"},
    {"STNQGY", true, "Secreted hydrolase", "extracellular space", "hydrolyzes glycosidic bonds in polysaccharides",
     "Hydrolysis of (1->4)-beta-D-glucosidic linkages + H2O = D-glucose", "Glycoside hydrolase domain, CBM motif",
     "Hydrolyzes extracellular polysaccharides. Required for carbon source utilization.", "soluble", "soluble",
     "extracellular"},
    {"GPCAS", false, "Cytosolic kinase", "cytoplasm", "phosphorylates serine and threonine residues",
     "ATP + L-seryl-[protein] = ADP + O-phospho-L-seryl-[protein] + H(+)", "Protein kinase domain, SH2 motif",
     "Catalyzes phosphorylation of target proteins. Plays a role in signal transduction.", "insoluble", "soluble",
     "cytoplasm"},
}};

// Fold classes assigned to each family; the first is used for short chains.
const std::array<std::array<int, 2>, kFixtureFamilies> kFoldClasses = {{{12, 407}, {88, 1194}, {3, 650}, {0, 231}}};

const std::array<const char*, 4> kPromptLeads = {
    "Analyze the following protein sequence and describe its function.",
    "Given this protein sequence, what catalytic activity does it have?",
    "Identify the domains or motifs in the provided protein sequence.",
    "Please give a functional description of the protein sequence below.",
};

std::string random_sequence(const Family& fam, int length, std::mt19937_64& rng) {
  const std::string_view preferred = fam.residues;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::string seq;
  for (int i = 0; i < length; ++i) {
    const std::string_view pool = u(rng) < 0.8 ? preferred : kCanonicalResidues;
    seq.push_back(pool[static_cast<std::size_t>(u(rng) * static_cast<double>(pool.size())) % pool.size()]);
  }
  return seq;
}

Vec3 any_perpendicular(const Vec3& t) {
  const Vec3 ref = std::abs(t.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return t.cross(ref).normalized();
}

std::string molinst_answer(TaskTag task, const Family& fam) {
  switch (task) {
    case TaskTag::protein_function:
      return fmt::format("This protein {} and is found in the {}.", fam.function_text, fam.location);
    case TaskTag::catalytic_activity:
      return fmt::format("Based on the sequence, the enzyme catalyzes the reaction: {}.", fam.reaction);
    case TaskTag::domain_motif:
      return fmt::format("The protein likely contains the following domains or motifs: {}.", fam.domains);
    case TaskTag::functional_description:
      return fmt::format("A short summary of this protein: {}", fam.description);
    default:
      throw std::invalid_argument("not an understanding task");
  }
}

void fill_peer(TaskTag task, const FixtureConfig& cfg, const std::vector<int>& families, std::size_t train_pool,
               std::mt19937_64& rng, PeerSplits& out) {
  const std::size_t n = families.size();
  std::uniform_int_distribution<std::size_t> pick_train(0, train_pool - 1);
  std::uniform_int_distribution<std::size_t> pick_test(train_pool, n - 1);
  auto label_of = [&](std::size_t a, std::size_t b) -> std::string {
    const Family& fam = kFamilies[static_cast<std::size_t>(families[a])];
    switch (task) {
      case TaskTag::solubility: return fam.solubility;
      case TaskTag::binary_localization: return fam.binary_location;
      case TaskTag::subcellular_localization: return fam.subcellular;
      case TaskTag::fold_classification:
        return std::to_string(kFoldClasses[static_cast<std::size_t>(families[a])][a % 2]);
      default: return families[a] == families[b] ? "interact" : "do not interact";
    }
  };
  const bool pair = protein_arity(task) == 2;
  for (const char* split : {"train", "valid", "test"}) {
    const bool test = std::string_view(split) == "test";
    for (std::size_t i = 0; i < cfg.peer_per_split; ++i) {
      const std::size_t a = test ? pick_test(rng) : pick_train(rng);
      std::size_t b = test ? pick_test(rng) : pick_train(rng);
      // Alternate interacting and non-interacting pairs.
      if (pair && i % 2 == 0) {
        for (int tries = 0; tries < 64 && families[b] != families[a]; ++tries) b = test ? pick_test(rng) : pick_train(rng);
      }
      PeerInstance inst;
      inst.protein_ids.push_back(fmt::format("P{:04d}", a));
      if (pair) inst.protein_ids.push_back(fmt::format("P{:04d}", b));
      inst.label = label_of(a, b);
      inst.split = split;
      (test ? out.test : std::string_view(split) == "train" ? out.train : out.validation).push_back(std::move(inst));
    }
  }
}

}  // namespace

ProteinStructure synthetic_structure(const std::string& id, const std::string& sequence, bool helical,
                                     std::mt19937_64& rng) {
  const std::size_t L = sequence.size();
  std::vector<Vec3> ca(L);
  std::normal_distribution<double> gauss(0.0, 1.0);
  if (helical) {
    // Alpha-helix: radius 2.3 Å, rise 1.5 Å, 100 degrees per residue (CA-CA ~3.8 Å).
    const double turn = 100.0 * std::numbers::pi / 180.0;
    for (std::size_t i = 0; i < L; ++i) {
      const double a = turn * static_cast<double>(i);
      ca[i] = Vec3(2.3 * std::cos(a), 2.3 * std::sin(a), 1.5 * static_cast<double>(i));
    }
  } else {
    Vec3 dir = Vec3::UnitX();
    for (std::size_t i = 0; i < L; ++i) {
      if (i == 0) {
        ca[i] = Vec3::Zero();
        continue;
      }
      // Persistent random walk; reject steps that come closer than 3.8 Å to
      // an earlier residue when possible.
      Vec3 best = ca[i - 1] + 3.8 * dir;
      for (int attempt = 0; attempt < 20; ++attempt) {
        Vec3 step = (dir + 0.8 * Vec3(gauss(rng), gauss(rng), gauss(rng))).normalized();
        const Vec3 cand = ca[i - 1] + 3.8 * step;
        bool clash = false;
        for (std::size_t j = 0; j + 1 < i; ++j) clash = clash || (cand - ca[j]).norm() < 3.8;
        best = cand;
        if (!clash) {
          dir = step;
          break;
        }
      }
      ca[i] = best;
    }
  }
  ProteinStructure s;
  s.id = id;
  for (std::size_t i = 0; i < L; ++i) {
    const Vec3 prev = i > 0 ? ca[i - 1] : ca[i] - (L > 1 ? Vec3(ca[1] - ca[0]) : Vec3(Vec3::UnitX()));
    const Vec3 next = i + 1 < L ? ca[i + 1] : ca[i] + (ca[i] - prev);
    const Vec3 t = (next - prev).normalized();
    const Vec3 n = any_perpendicular(t);
    const Vec3 b = t.cross(n);
    ResidueRecord r;
    r.aa_code = sequence[i];
    r.ca = ca[i];
    r.n = ca[i] - 1.2 * t + 0.8 * n;
    r.c = ca[i] + 1.2 * t + 0.8 * n;
    r.o = r.c + 1.23 * b;
    s.residues.push_back(r);
  }
  return s;
}

FixtureSet generate_fixtures(const FixtureConfig& cfg) {
  if (cfg.num_proteins < 8) throw ConfigError("fixtures.num_proteins must be at least 8");
  if (cfg.min_length < 1 || cfg.max_length < cfg.min_length) throw ConfigError("fixture length range is invalid");
  if (cfg.peer_per_split < 1) throw ConfigError("fixtures.peer_per_split must be positive");
  std::mt19937_64 rng(derive_seed(cfg.seed, "fixtures"));
  std::uniform_int_distribution<int> length(cfg.min_length, cfg.max_length);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FixtureSet fx;
  for (std::size_t i = 0; i < cfg.num_proteins; ++i) {
    const int f = static_cast<int>(i % kFixtureFamilies);
    const Family& fam = kFamilies[static_cast<std::size_t>(f)];
    const std::string id = fmt::format("P{:04d}", i);
    const std::string seq = random_sequence(fam, length(rng), rng);
    fx.structures.push_back(synthetic_structure(id, seq, fam.helical, rng));
    fx.families.push_back(f);

    AnnotationRecord rec{id, fmt::format("{} {}", fam.name, i + 1), fam.location, fam.function_text,
                         std::string(fam.name) + " family"};
    // Drop single fields now and then so the omission rule is exercised.
    const double drop = u(rng);
    if (drop < 0.1) rec.subcellular_location.clear();
    else if (drop < 0.2) rec.families.clear();
    else if (drop < 0.25) rec.function_text.clear();
    fx.annotations.push_back(std::move(rec));

    for (std::size_t t = 0; t < 4; ++t) {
      const TaskTag task = kFinetuneTasks[t];
      std::string prompt = fmt::format("{}\n```\n{}\n```", kPromptLeads[t], seq);
      fx.molinst[task].push_back(MolInstRecord{id, std::move(prompt), molinst_answer(task, fam)});
    }
  }
  // The last quarter of proteins is reserved for PEER test splits.
  const std::size_t train_pool = cfg.num_proteins - cfg.num_proteins / 4;
  for (TaskTag task : kPeerTasks) {
    std::mt19937_64 task_rng(derive_seed(cfg.seed, "peer/" + to_string(task)));
    fill_peer(task, cfg, fx.families, train_pool, task_rng, fx.peer[task]);
  }
  return fx;
}

void write_fixtures(const FixtureSet& fx, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "structures");
  fs::create_directories(fs::path(dir) / "peer");
  fs::create_directories(fs::path(dir) / "molinst");
  for (const auto& s : fx.structures) write_file(dir + "/structures/" + s.id + ".pdb", write_pdb(s));

  std::string ann = "protein_id\tname\tlocation\tfunction\tfamilies\n";
  for (const auto& r : fx.annotations) {
    ann += fmt::format("{}\t{}\t{}\t{}\t{}\n", r.protein_id, r.name, r.subcellular_location, r.function_text,
                       r.families);
  }
  write_file(dir + "/annotations.tsv", ann);

  for (const auto& [task, splits] : fx.peer) {
    std::string text = "protein_id\tlabel\tsplit\n";
    for (const auto* part : {&splits.train, &splits.validation, &splits.test}) {
      for (const auto& inst : *part) {
        std::string ids;
        for (const auto& id : inst.protein_ids) ids += (ids.empty() ? "" : ",") + id;
        text += fmt::format("{}\t{}\t{}\n", ids, inst.label, inst.split);
      }
    }
    write_file(dir + "/peer/" + to_string(task) + ".tsv", text);
  }

  for (const auto& [task, records] : fx.molinst) {
    std::string text;
    for (const auto& r : records) {
      nlohmann::ordered_json j;
      j["protein_id"] = r.protein_id;
      j["prompt"] = r.prompt;
      j["answer"] = r.answer;
      text += j.dump() + "\n";
    }
    write_file(dir + "/molinst/" + to_string(task) + ".jsonl", text);
  }
}

}  // namespace protfuse
