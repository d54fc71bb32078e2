#pragma once

#include "protfuse/instruction_data.hpp"

#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace protfuse {

/// Lowercased whitespace tokens with punctuation removed. Formula-like tokens
/// (letters or digits mixed with parentheses, '+' or '-', or containing a
/// digit) keep their inner characters and lose only trailing sentence
/// punctuation, so "H(+)" and "H2O" survive intact.
std::vector<std::string> rouge_tokens(std::string_view text);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Balanced F1 of LCS precision and recall over rouge_tokens. Both empty:
/// 1.0; exactly one empty: 0.0.
double rouge_l(std::string_view reference, std::string_view hypothesis);

/// Per-task regular expressions selecting the critical spans of an answer.
class CriticalRules {
 public:
  static CriticalRules load(const std::string& path);
  static CriticalRules parse(std::string_view text);
  static const CriticalRules& bundled();

  /// Matched spans in text order joined by single spaces; "" if none match.
  /// Throws std::invalid_argument for tasks without rules.
  std::string extract(std::string_view text, TaskTag task) const;
  bool supports(TaskTag task) const;

 private:
  std::vector<std::pair<TaskTag, std::regex>> rules_;
};

std::string extract_critical(std::string_view text, TaskTag task,
                             const CriticalRules& rules = CriticalRules::bundled());

/// ROUGE-L on critical parts; protein_function is scored on the full text.
double rouge_l_critical(std::string_view reference, std::string_view hypothesis, TaskTag task,
                        const CriticalRules& rules = CriticalRules::bundled());

inline constexpr std::string_view kUnparseable = "UNPARSEABLE";

/// Label at the earliest position of the lowercased answer, matching whole
/// words only; at equal positions the longer label wins. Fold classification
/// takes the first standalone integer in [0, 1194]. Returns kUnparseable when
/// nothing matches.
std::string parse_classification(std::string_view answer, TaskTag task);

/// Fraction of exact matches. Throws std::invalid_argument on a length
/// mismatch or empty input.
double accuracy(const std::vector<std::string>& predictions, const std::vector<std::string>& golds);

struct EvalReport {
  std::string task;
  std::string metric;
  std::vector<double> per_seed;
  double mean = 0;
  double std = 0;
  std::size_t num_examples = 0;
};

/// Mean and population standard deviation. Throws std::invalid_argument
/// unless scores.size() == expected_runs.
EvalReport aggregate_runs(const std::vector<double>& scores, std::string task = {}, std::string metric = {},
                          std::size_t num_examples = 0, std::size_t expected_runs = 3);

std::string report_to_jsonl(const std::vector<EvalReport>& reports);
/// Fixed-width table, one "mean ± std" line per report.
std::string summary_table(const std::vector<EvalReport>& reports);

}  // namespace protfuse
