#include "protfuse/protein_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

namespace protfuse {

namespace {

constexpr std::array<std::pair<std::string_view, char>, 20> kThreeLetter = {{
    {"ALA", 'A'}, {"CYS", 'C'}, {"ASP", 'D'}, {"GLU", 'E'}, {"PHE", 'F'},
    {"GLY", 'G'}, {"HIS", 'H'}, {"ILE", 'I'}, {"LYS", 'K'}, {"LEU", 'L'},
    {"MET", 'M'}, {"ASN", 'N'}, {"PRO", 'P'}, {"GLN", 'Q'}, {"ARG", 'R'},
    {"SER", 'S'}, {"THR", 'T'}, {"VAL", 'V'}, {"TRP", 'W'}, {"TYR", 'Y'},
}};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_double(std::string_view field) {
  field = trim(field);
  if (field.empty()) return std::nullopt;
  double v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

struct PendingResidue {
  std::string key;
  std::string res_name;
  std::array<std::optional<Vec3>, 4> atoms;  // N, CA, C, O
};

int backbone_slot(std::string_view atom_name) {
  atom_name = trim(atom_name);
  if (atom_name == "N") return 0;
  if (atom_name == "CA") return 1;
  if (atom_name == "C") return 2;
  if (atom_name == "O") return 3;
  return -1;
}

std::string format_line(const ResidueRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%c %.3f %.3f %.3f %.3f %.3f %.3f %.3f %.3f %.3f %.3f %.3f %.3f", r.aa_code,
                r.n.x(), r.n.y(), r.n.z(), r.ca.x(), r.ca.y(), r.ca.z(), r.c.x(), r.c.y(), r.c.z(), r.o.x(),
                r.o.y(), r.o.z());
  return buf;
}

}  // namespace

char three_to_one(std::string_view name) {
  name = trim(name);
  for (const auto& [three, one] : kThreeLetter) {
    if (three == name) return one;
  }
  return 'X';
}

std::string one_to_three(char code) {
  for (const auto& [three, one] : kThreeLetter) {
    if (one == code) return std::string(three);
  }
  return "UNK";
}

ProteinStructure parse_structure(std::string_view text, std::string id) {
  ProteinStructure out;
  out.id = std::move(id);
  std::vector<PendingResidue> pending;
  std::optional<char> chain;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.rfind("ENDMDL", 0) == 0) break;
    if (line.rfind("ATOM", 0) != 0) continue;
    if (line.size() < 54) {
      throw DataError("malformed ATOM record at line " + std::to_string(line_no) + ": record too short");
    }
    const auto x = parse_double(line.substr(30, 8));
    const auto y = parse_double(line.substr(38, 8));
    const auto z = parse_double(line.substr(46, 8));
    if (!x || !y || !z) {
      throw DataError("malformed ATOM record at line " + std::to_string(line_no) + ": bad coordinates");
    }
    const char chain_id = line[21];
    if (chain && *chain != chain_id) {
      throw DataError("multiple chains are not supported (line " + std::to_string(line_no) + ")");
    }
    chain = chain_id;

    const std::string res_name(trim(line.substr(17, 3)));
    std::string key = std::string(line.substr(22, 5)) + "|" + res_name;
    if (pending.empty() || pending.back().key != key) {
      pending.push_back(PendingResidue{std::move(key), res_name, {}});
    }
    const int slot = backbone_slot(line.substr(12, 4));
    if (slot >= 0 && !pending.back().atoms[static_cast<std::size_t>(slot)]) {
      pending.back().atoms[static_cast<std::size_t>(slot)] = Vec3(*x, *y, *z);
    }
  }

  for (const auto& p : pending) {
    if (!p.atoms[0] || !p.atoms[1] || !p.atoms[2] || !p.atoms[3]) {
      ++out.dropped_residues;
      continue;
    }
    out.residues.push_back(ResidueRecord{three_to_one(p.res_name), *p.atoms[0], *p.atoms[1], *p.atoms[2], *p.atoms[3]});
  }
  if (out.residues.empty()) throw DataError("structure has no complete backbone residues");
  return out;
}

std::string serialize_structure(const ProteinStructure& s) {
  std::string out = "# protfuse-structure v1 " + s.id + "\n";
  for (const auto& r : s.residues) {
    out += format_line(r);
    out += '\n';
  }
  return out;
}

ProteinStructure deserialize_structure(std::string_view text) {
  ProteinStructure out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string prefix = "# protfuse-structure v1";
      if (line.rfind(prefix, 0) != 0) throw DataError("unsupported structure cache header");
      out.id = std::string(trim(std::string_view(line).substr(prefix.size())));
      header = true;
      continue;
    }
    std::istringstream fields(line);
    std::string code;
    std::array<double, 12> v{};
    fields >> code;
    for (double& d : v) fields >> d;
    if (!fields || code.size() != 1) {
      throw DataError("malformed structure cache line " + std::to_string(line_no));
    }
    ResidueRecord r;
    r.aa_code = code[0];
    r.n = Vec3(v[0], v[1], v[2]);
    r.ca = Vec3(v[3], v[4], v[5]);
    r.c = Vec3(v[6], v[7], v[8]);
    r.o = Vec3(v[9], v[10], v[11]);
    out.residues.push_back(r);
  }
  if (!header) throw DataError("structure cache is missing its header");
  if (out.residues.empty()) throw DataError("structure cache has no residues");
  return out;
}

std::string write_pdb(const ProteinStructure& s) {
  std::string out;
  int serial = 1;
  constexpr std::array<const char*, 4> names = {" N  ", " CA ", " C  ", " O  "};
  constexpr std::array<char, 4> elements = {'N', 'C', 'C', 'O'};
  for (std::size_t i = 0; i < s.residues.size(); ++i) {
    const auto& r = s.residues[i];
    const std::array<const Vec3*, 4> atoms = {&r.n, &r.ca, &r.c, &r.o};
    for (std::size_t a = 0; a < 4; ++a) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "ATOM  %5d %4s %3s A%4zu    %8.3f%8.3f%8.3f  1.00  0.00           %c\n",
                    serial++, names[a], one_to_three(r.aa_code).c_str(), i + 1, atoms[a]->x(), atoms[a]->y(),
                    atoms[a]->z(), elements[a]);
      out += buf;
    }
  }
  out += "END\n";
  return out;
}

std::string derive_sequence(const ProteinStructure& s) {
  std::string seq;
  seq.reserve(s.residues.size());
  for (const auto& r : s.residues) seq.push_back(r.aa_code);
  return seq;
}

Eigen::RowVectorXd rbf_encode(double distance, int rbf_count) {
  constexpr double lo = 2.0, hi = 22.0;
  const double spacing = rbf_count > 1 ? (hi - lo) / (rbf_count - 1) : (hi - lo);
  Eigen::RowVectorXd out(rbf_count);
  for (int m = 0; m < rbf_count; ++m) {
    const double z = (distance - (lo + spacing * m)) / spacing;
    out(m) = std::exp(-z * z);
  }
  return out;
}

ResidueGraph build_residue_graph(const ProteinStructure& s, int k, int rbf_count) {
  if (k < 1) throw std::invalid_argument("build_residue_graph: k must be >= 1");
  if (rbf_count < 1) throw std::invalid_argument("build_residue_graph: rbf_count must be >= 1");
  const auto L = static_cast<Eigen::Index>(s.residues.size());
  ResidueGraph g;
  g.num_residues = L;
  g.k = k;
  g.neighbor_index.resize(L, k);
  g.valid.resize(L, k);
  g.distance = Eigen::MatrixXd::Zero(L, k);
  g.edge_features = Eigen::MatrixXd::Zero(L * k, rbf_count);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(L));
  std::vector<double> dist(static_cast<std::size_t>(L));
  for (Eigen::Index i = 0; i < L; ++i) {
    const Vec3& ca = s.residues[static_cast<std::size_t>(i)].ca;
    for (Eigen::Index j = 0; j < L; ++j) {
      dist[static_cast<std::size_t>(j)] = (s.residues[static_cast<std::size_t>(j)].ca - ca).norm();
    }
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      if ((a == i) != (b == i)) return a == i;
      const double da = dist[static_cast<std::size_t>(a)], db = dist[static_cast<std::size_t>(b)];
      return da != db ? da < db : a < b;
    });
    const Eigen::Index chosen = std::min<Eigen::Index>(L, k);
    for (Eigen::Index slot = 0; slot < k; ++slot) {
      const bool real = slot < chosen;
      const Eigen::Index j = order[static_cast<std::size_t>(real ? slot : chosen - 1)];
      g.neighbor_index(i, slot) = j;
      g.valid(i, slot) = real;
      if (real) {
        g.distance(i, slot) = dist[static_cast<std::size_t>(j)];
        g.edge_features.row(i * k + slot) = rbf_encode(dist[static_cast<std::size_t>(j)], rbf_count);
      }
    }
  }
  return g;
}

ProteinStructure load_structure_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open structure file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (text.rfind("# protfuse-structure", 0) == 0) return deserialize_structure(text);
  return parse_structure(text);
}

void save_structure_file(const ProteinStructure& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write structure file '" + path + "'");
  out << serialize_structure(s);
}

}  // namespace protfuse
