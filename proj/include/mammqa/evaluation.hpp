#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mammqa/core.hpp"

namespace mammqa {

struct MissingGold : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// SQuAD-style answer normalization: lowercase, strip punctuation, drop the
// articles "a"/"an"/"the" as whole words, collapse whitespace. Absolute
// accuracies depend on this convention; it is the only normalization the
// scorer applies.
std::string normalize_answer(const std::string& s);

// Exact match against gold aliases. An absent prediction (abstention) never
// matches. A single-valued alias compares normalized strings; a list-valued
// alias splits the prediction on ","/";"/" and " and compares the normalized
// items as multisets. Any matching alias suffices.
bool exact_match(const std::optional<std::string>& prediction,
                 const std::vector<std::vector<std::string>>& gold);

// Splits a surface answer into list items on ","/";"/" and ".
std::vector<std::string> split_answer_list(const std::string& s);

struct ScoreBucket {
  int correct = 0;
  int total = 0;
  // Accuracy in percent.
  double accuracy() const { return total > 0 ? 100.0 * correct / total : 0.0; }

  bool operator==(const ScoreBucket&) const = default;
};

struct ScoreReport {
  std::map<std::string, ScoreBucket> per_tag;
  ScoreBucket overall;
  int abstention_count = 0;
  int parse_failure_count = 0;

  bool operator==(const ScoreReport&) const = default;
};

// Scores traces against their instances (joined on instance id). Instances
// bucket under their gold_modality_tag, or under their available-modality
// signature when the dataset carries no tag. Throws MissingGold when a
// scored instance has no gold answers.
ScoreReport score_run(const std::vector<RunTrace>& traces,
                      const std::vector<QAInstance>& instances);

// Convenience overload for (prediction, instance) pairs.
ScoreReport score_pairs(
    const std::vector<std::pair<std::optional<std::string>, const QAInstance*>>& pairs);

enum class ReportFormat { Markdown, Csv, Json };

std::optional<ReportFormat> report_format_from_name(const std::string& name);

// Deterministic rendering; accuracies to 2 decimal places. Markdown column
// order is fixed: Img, Tb|Img, Tb|Txt, Tb, Txt|Img, Txt, then Text, Table,
// Image, then any remaining tags sorted, then Total.
std::string render_report(const ScoreReport& report, ReportFormat format);

// Side-by-side degradation view: per tag "<base> -> <other> (<signed pct>%)".
std::string render_report_diff(const ScoreReport& base, const ScoreReport& other,
                               ReportFormat format);

void to_json(nlohmann::json& j, const ScoreReport& r);
void from_json(const nlohmann::json& j, ScoreReport& r);

}  // namespace mammqa
