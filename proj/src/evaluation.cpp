#include "mammqa/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace mammqa {

using nlohmann::json;

std::string normalize_answer(const std::string& s) {
  std::string lowered;
  lowered.reserve(s.size());
  for (unsigned char c : s) {
    if (std::ispunct(c)) continue;
    lowered += static_cast<char>(std::tolower(c));
  }
  std::istringstream words(lowered);
  std::string word, out;
  while (words >> word) {
    if (word == "a" || word == "an" || word == "the") continue;
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

std::vector<std::string> split_answer_list(const std::string& s) {
  // " and " acts as a separator alongside "," and ";".
  std::string flattened = s;
  size_t pos = 0;
  while ((pos = flattened.find(" and ", pos)) != std::string::npos) {
    flattened.replace(pos, 5, ",");
  }
  std::vector<std::string> items;
  std::string current;
  for (char c : flattened) {
    if (c == ',' || c == ';') {
      items.push_back(current);
      current.clear();
    } else {
      current += c;
    }
  }
  items.push_back(current);
  std::vector<std::string> out;
  for (std::string& item : items) {
    size_t b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    size_t e = item.find_last_not_of(" \t");
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

namespace {

std::vector<std::string> normalized_multiset(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const std::string& item : items) {
    std::string n = normalize_answer(item);
    if (!n.empty()) out.push_back(std::move(n));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

bool exact_match(const std::optional<std::string>& prediction,
                 const std::vector<std::vector<std::string>>& gold) {
  if (!prediction) return false;
  for (const std::vector<std::string>& alias : gold) {
    if (alias.empty()) continue;
    if (alias.size() == 1) {
      if (normalize_answer(*prediction) == normalize_answer(alias[0])) return true;
    } else {
      if (normalized_multiset(split_answer_list(*prediction)) == normalized_multiset(alias))
        return true;
    }
  }
  return false;
}

ScoreReport score_pairs(
    const std::vector<std::pair<std::optional<std::string>, const QAInstance*>>& pairs) {
  ScoreReport report;
  for (const auto& [prediction, instance] : pairs) {
    if (instance->gold_answers.empty())
      throw MissingGold("instance " + instance->id + " has no gold answers");
    std::string tag = instance->gold_modality_tag.empty()
                          ? modality_signature(available_modalities(*instance))
                          : instance->gold_modality_tag;
    bool correct = exact_match(prediction, instance->gold_answers);
    ScoreBucket& bucket = report.per_tag[tag];
    bucket.total += 1;
    report.overall.total += 1;
    if (correct) {
      bucket.correct += 1;
      report.overall.correct += 1;
    }
    if (!prediction) report.abstention_count += 1;
  }
  return report;
}

ScoreReport score_run(const std::vector<RunTrace>& traces,
                      const std::vector<QAInstance>& instances) {
  std::unordered_map<std::string, const QAInstance*> by_id;
  for (const QAInstance& inst : instances) by_id[inst.id] = &inst;

  std::vector<std::pair<std::optional<std::string>, const QAInstance*>> pairs;
  int parse_failures = 0;
  for (const RunTrace& trace : traces) {
    auto it = by_id.find(trace.instance_id);
    if (it == by_id.end())
      throw MissingGold("trace instance " + trace.instance_id + " not found in dataset");
    pairs.emplace_back(trace.prediction, it->second);
    if (trace.failed || trace.parse_failures > 0) ++parse_failures;
  }
  ScoreReport report = score_pairs(pairs);
  report.parse_failure_count = parse_failures;
  return report;
}

std::optional<ReportFormat> report_format_from_name(const std::string& name) {
  if (name == "markdown" || name == "md") return ReportFormat::Markdown;
  if (name == "csv") return ReportFormat::Csv;
  if (name == "json") return ReportFormat::Json;
  return std::nullopt;
}

namespace {

// Fixed column order: the cross-modality tags first, then the single-label
// tags used by tri-modal datasets, then anything else sorted.
const char* const kPreferredTags[] = {"Img", "Tb|Img", "Tb|Txt", "Tb",   "Txt|Img",
                                      "Txt", "Text",   "Table",  "Image"};

std::vector<std::string> ordered_tags(const ScoreReport& report) {
  std::vector<std::string> tags;
  std::set<std::string> seen;
  for (const char* tag : kPreferredTags) {
    if (report.per_tag.count(tag)) {
      tags.push_back(tag);
      seen.insert(tag);
    }
  }
  for (const auto& [tag, bucket] : report.per_tag) {
    (void)bucket;
    if (!seen.count(tag)) tags.push_back(tag);  // per_tag map is already sorted
  }
  return tags;
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape_md(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += "\\|";
    else out += c;
  }
  return out;
}

std::string signed_pct(double base, double other) {
  if (base == 0.0) return "n/a";
  double delta = (other - base) / base * 100.0;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.2f%%", delta);
  return buf;
}

}  // namespace

std::string render_report(const ScoreReport& report, ReportFormat format) {
  std::vector<std::string> tags = ordered_tags(report);
  switch (format) {
    case ReportFormat::Json: {
      return json(report).dump(2) + "\n";
    }
    case ReportFormat::Csv: {
      std::string out = "tag,correct,total,accuracy\n";
      for (const std::string& tag : tags) {
        const ScoreBucket& b = report.per_tag.at(tag);
        out += tag + "," + std::to_string(b.correct) + "," + std::to_string(b.total) + "," +
               fmt2(b.accuracy()) + "\n";
      }
      out += "Total," + std::to_string(report.overall.correct) + "," +
             std::to_string(report.overall.total) + "," + fmt2(report.overall.accuracy()) + "\n";
      return out;
    }
    case ReportFormat::Markdown: {
      std::string header = "|", sep = "|", row = "|";
      for (const std::string& tag : tags) {
        header += " " + escape_md(tag) + " |";
        sep += " --- |";
        row += " " + fmt2(report.per_tag.at(tag).accuracy()) + " |";
      }
      header += " Total |";
      sep += " --- |";
      row += " " + fmt2(report.overall.accuracy()) + " |";
      std::string out = header + "\n" + sep + "\n" + row + "\n";
      out += "\nInstances: " + std::to_string(report.overall.total) +
             ", abstentions: " + std::to_string(report.abstention_count) +
             ", parse failures: " + std::to_string(report.parse_failure_count) + "\n";
      return out;
    }
  }
  return {};
}

std::string render_report_diff(const ScoreReport& base, const ScoreReport& other,
                               ReportFormat format) {
  // Union of tags, in the same fixed order.
  ScoreReport merged = base;
  for (const auto& [tag, bucket] : other.per_tag) merged.per_tag.emplace(tag, bucket);
  std::vector<std::string> tags = ordered_tags(merged);

  auto acc = [](const ScoreReport& r, const std::string& tag) {
    auto it = r.per_tag.find(tag);
    return it == r.per_tag.end() ? 0.0 : it->second.accuracy();
  };

  switch (format) {
    case ReportFormat::Json: {
      json j;
      for (const std::string& tag : tags) {
        j["per_tag"][tag] = {{"base", acc(base, tag)},
                             {"other", acc(other, tag)},
                             {"delta_pct", signed_pct(acc(base, tag), acc(other, tag))}};
      }
      j["overall"] = {{"base", base.overall.accuracy()},
                      {"other", other.overall.accuracy()},
                      {"delta_pct", signed_pct(base.overall.accuracy(), other.overall.accuracy())}};
      return j.dump(2) + "\n";
    }
    case ReportFormat::Csv: {
      std::string out = "tag,base,other,delta\n";
      for (const std::string& tag : tags) {
        out += tag + "," + fmt2(acc(base, tag)) + "," + fmt2(acc(other, tag)) + "," +
               signed_pct(acc(base, tag), acc(other, tag)) + "\n";
      }
      out += "Total," + fmt2(base.overall.accuracy()) + "," + fmt2(other.overall.accuracy()) +
             "," + signed_pct(base.overall.accuracy(), other.overall.accuracy()) + "\n";
      return out;
    }
    case ReportFormat::Markdown: {
      std::string out = "| Tag | Base | Perturbed |\n| --- | --- | --- |\n";
      for (const std::string& tag : tags) {
        out += "| " + escape_md(tag) + " | " + fmt2(acc(base, tag)) + " | " +
               fmt2(acc(other, tag)) + " (" + signed_pct(acc(base, tag), acc(other, tag)) +
               ") |\n";
      }
      out += "| Total | " + fmt2(base.overall.accuracy()) + " | " +
             fmt2(other.overall.accuracy()) + " (" +
             signed_pct(base.overall.accuracy(), other.overall.accuracy()) + ") |\n";
      return out;
    }
  }
  return {};
}

void to_json(json& j, const ScoreReport& r) {
  json per_tag = json::object();
  for (const auto& [tag, bucket] : r.per_tag) {
    per_tag[tag] = {{"correct", bucket.correct},
                    {"total", bucket.total},
                    {"accuracy", bucket.accuracy()}};
  }
  j = json{{"per_tag", per_tag},
           {"overall",
            {{"correct", r.overall.correct},
             {"total", r.overall.total},
             {"accuracy", r.overall.accuracy()}}},
           {"abstention_count", r.abstention_count},
           {"parse_failure_count", r.parse_failure_count}};
}

void from_json(const json& j, ScoreReport& r) {
  r.per_tag.clear();
  for (const auto& [tag, b] : j.at("per_tag").items()) {
    r.per_tag[tag] = ScoreBucket{b.at("correct").get<int>(), b.at("total").get<int>()};
  }
  r.overall = ScoreBucket{j.at("overall").at("correct").get<int>(),
                          j.at("overall").at("total").get<int>()};
  r.abstention_count = j.value("abstention_count", 0);
  r.parse_failure_count = j.value("parse_failure_count", 0);
}

}  // namespace mammqa
