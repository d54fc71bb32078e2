#include "protfuse/evaluation.hpp"

#include "protfuse/text_io.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace protfuse {

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

bool is_sentence_punct(char c) { return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?'; }

bool is_formula_char(char c) { return is_alnum(c) || c == '(' || c == ')' || c == '+' || c == '-'; }

std::string normalize_token(std::string_view raw) {
  std::string_view t = raw;
  while (!t.empty() && is_sentence_punct(t.back())) t.remove_suffix(1);
  const bool has_alnum = std::any_of(t.begin(), t.end(), is_alnum);
  const bool formula_chars = std::all_of(t.begin(), t.end(), is_formula_char);
  const bool has_digit = std::any_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
  const bool has_sign = t.find_first_of("()+") != std::string_view::npos;
  if (has_alnum && formula_chars && (has_digit || has_sign)) return to_lower(t);
  std::string out;
  for (char c : raw) {
    if (is_alnum(c)) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

bool boundary_before(std::string_view text, std::size_t pos) { return pos == 0 || !is_alnum(text[pos - 1]); }

bool boundary_after(std::string_view text, std::size_t end) { return end >= text.size() || !is_alnum(text[end]); }

}  // namespace

std::vector<std::string> rouge_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) {
      std::string tok = normalize_token(text.substr(i, j - i));
      if (!tok.empty()) out.push_back(std::move(tok));
    }
    i = j;
  }
  return out;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::string_view reference, std::string_view hypothesis) {
  const auto ref = rouge_tokens(reference);
  const auto hyp = rouge_tokens(hypothesis);
  if (ref.empty() && hyp.empty()) return 1.0;
  if (ref.empty() || hyp.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(ref, hyp));
  if (lcs == 0) return 0.0;
  const double p = lcs / static_cast<double>(hyp.size());
  const double r = lcs / static_cast<double>(ref.size());
  return 2 * p * r / (p + r);
}

CriticalRules CriticalRules::parse(std::string_view text) {
  CriticalRules out;
  int line_no = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++line_no;
    if (trim(raw).empty() || raw.front() == '#') continue;
    const std::size_t tab = raw.find('\t');
    if (tab == std::string::npos) throw DataError("critical rules line " + std::to_string(line_no) + ": missing tab");
    const TaskTag task = parse_task(std::string(trim(std::string_view(raw).substr(0, tab))));
    try {
      out.rules_.emplace_back(task, std::regex(raw.substr(tab + 1), std::regex::ECMAScript));
    } catch (const std::regex_error& e) {
      throw DataError("critical rules line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

CriticalRules CriticalRules::load(const std::string& path) { return parse(read_file(path)); }

const CriticalRules& CriticalRules::bundled() {
  static const CriticalRules rules = load(std::string(PROTFUSE_DATA_DIR) + "/templates/critical_rules.tsv");
  return rules;
}

bool CriticalRules::supports(TaskTag task) const {
  return std::any_of(rules_.begin(), rules_.end(), [&](const auto& r) { return r.first == task; });
}

std::string CriticalRules::extract(std::string_view text, TaskTag task) const {
  if (!supports(task)) throw std::invalid_argument("no critical-part rules for task " + to_string(task));
  std::vector<std::pair<std::size_t, std::string>> spans;
  const std::string s(text);
  for (const auto& [t, re] : rules_) {
    if (t != task) continue;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
      const std::smatch& m = *it;
      const std::size_t g = m.size() > 1 && m[1].matched ? 1 : 0;
      const std::string span(trim(m.str(g)));
      if (!span.empty()) spans.emplace_back(static_cast<std::size_t>(m.position(g)), span);
    }
  }
  std::stable_sort(spans.begin(), spans.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::string out;
  for (const auto& [pos, span] : spans) {
    if (!out.empty()) out += ' ';
    out += span;
  }
  return out;
}

std::string extract_critical(std::string_view text, TaskTag task, const CriticalRules& rules) {
  return rules.extract(text, task);
}

double rouge_l_critical(std::string_view reference, std::string_view hypothesis, TaskTag task,
                        const CriticalRules& rules) {
  if (task == TaskTag::protein_function) return rouge_l(reference, hypothesis);
  return rouge_l(rules.extract(reference, task), rules.extract(hypothesis, task));
}

std::string parse_classification(std::string_view answer, TaskTag task) {
  if (!is_classification(task)) throw std::invalid_argument(to_string(task) + " is not a classification task");
  const std::string text = to_lower(answer);
  if (task == TaskTag::fold_classification) {
    std::size_t i = 0;
    while (i < text.size()) {
      if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      const bool decimal_before = i > 0 && text[i - 1] == '.';
      const bool decimal_after = j + 1 < text.size() && text[j] == '.' &&
                                 std::isdigit(static_cast<unsigned char>(text[j + 1]));
      if (boundary_before(text, i) && boundary_after(text, j) && !decimal_before && !decimal_after &&
          j - i <= 6) {
        const long value = std::stol(text.substr(i, j - i));
        if (value < kFoldClassCount) return std::to_string(value);
      }
      i = j;
    }
    return std::string(kUnparseable);
  }
  std::size_t best_pos = std::string::npos;
  std::string best;
  for (const std::string& label : label_words(task)) {
    for (std::size_t pos = text.find(label); pos != std::string::npos; pos = text.find(label, pos + 1)) {
      if (!boundary_before(text, pos) || !boundary_after(text, pos + label.size())) continue;
      if (pos < best_pos || (pos == best_pos && label.size() > best.size())) {
        best_pos = pos;
        best = label;
      }
      break;
    }
  }
  return best_pos == std::string::npos ? std::string(kUnparseable) : best;
}

double accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& golds) {
  if (predictions.size() != golds.size()) {
    throw std::invalid_argument("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                                std::to_string(golds.size()) + " gold labels");
  }
  if (golds.empty()) throw std::invalid_argument("accuracy: no examples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (predictions[i] != kUnparseable && predictions[i] == golds[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(golds.size());
}

EvalReport aggregate_runs(const std::vector<double>& scores, std::string task, std::string metric,
                          std::size_t num_examples, std::size_t expected_runs) {
  if (scores.size() != expected_runs || scores.empty()) {
    throw std::invalid_argument("aggregate_runs: expected " + std::to_string(expected_runs) + " scores, got " +
                                std::to_string(scores.size()));
  }
  EvalReport r{std::move(task), std::move(metric), scores, 0, 0, num_examples};
  for (double s : scores) r.mean += s;
  r.mean /= static_cast<double>(scores.size());
  double var = 0;
  for (double s : scores) var += (s - r.mean) * (s - r.mean);
  r.std = std::sqrt(var / static_cast<double>(scores.size()));
  return r;
}

std::string report_to_jsonl(const std::vector<EvalReport>& reports) {
  std::string out;
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["task"] = r.task;
    j["metric"] = r.metric;
    j["per_seed"] = r.per_seed;
    j["mean"] = r.mean;
    j["std"] = r.std;
    j["num_examples"] = r.num_examples;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string summary_table(const std::vector<EvalReport>& reports) {
  std::string out = fmt::format("{:<26} {:<16} {:>20} {:>8}\n", "task", "metric", "mean ± std", "n");
  for (const auto& r : reports) {
    out += fmt::format("{:<26} {:<16} {:>9.4f} ± {:<8.4f} {:>8}\n", r.task, r.metric, r.mean, r.std,
                       r.num_examples);
  }
  return out;
}

}  // namespace protfuse
