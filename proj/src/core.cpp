#include "mammqa/core.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace mammqa {

using nlohmann::json;

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::Text: return "text";
    case Modality::Table: return "table";
    case Modality::Image: return "image";
  }
  return "text";
}

std::optional<Modality> modality_from_name(const std::string& name) {
  if (name == "text") return Modality::Text;
  if (name == "table") return Modality::Table;
  if (name == "image") return Modality::Image;
  return std::nullopt;
}

const char* modality_tag(Modality m) {
  switch (m) {
    case Modality::Text: return "Txt";
    case Modality::Table: return "Tb";
    case Modality::Image: return "Img";
  }
  return "Txt";
}

std::string modality_signature(const std::vector<Modality>& modalities) {
  bool has_text = false, has_table = false, has_image = false;
  for (Modality m : modalities) {
    if (m == Modality::Text) has_text = true;
    if (m == Modality::Table) has_table = true;
    if (m == Modality::Image) has_image = true;
  }
  std::string out;
  auto add = [&out](const char* tag) {
    if (!out.empty()) out += "|";
    out += tag;
  };
  // Tag component order follows the report column naming: Tb, Txt, Img.
  if (has_table) add("Tb");
  if (has_text) add("Txt");
  if (has_image) add("Img");
  return out;
}

ImageRef ImageRef::with_loaded_bytes() const {
  if (has_bytes()) return *this;
  ImageRef out = *this;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read image file: " + path);
  out.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  if (out.media_type.empty()) {
    auto dot = path.find_last_of('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    if (ext == "png") out.media_type = "image/png";
    else if (ext == "jpg" || ext == "jpeg") out.media_type = "image/jpeg";
    else if (ext == "gif") out.media_type = "image/gif";
    else if (ext == "webp") out.media_type = "image/webp";
    else out.media_type = "application/octet-stream";
  }
  return out;
}

const char* decision_rule_name(DecisionRule r) {
  switch (r) {
    case DecisionRule::Majority: return "Majority";
    case DecisionRule::ConfidentOverUncertain: return "ConfidentOverUncertain";
    case DecisionRule::BestRationale: return "BestRationale";
    case DecisionRule::AllAbstained: return "AllAbstained";
  }
  return "AllAbstained";
}

std::optional<DecisionRule> decision_rule_from_name(const std::string& name) {
  if (name == "Majority") return DecisionRule::Majority;
  if (name == "ConfidentOverUncertain") return DecisionRule::ConfidentOverUncertain;
  if (name == "BestRationale") return DecisionRule::BestRationale;
  if (name == "AllAbstained") return DecisionRule::AllAbstained;
  return std::nullopt;
}

int RunTrace::activation_count() const {
  int n = 0;
  for (const ModelCall& c : model_calls)
    if (!c.retry) ++n;
  return n;
}

int RunTrace::backend_call_count() const {
  int n = 0;
  for (const ModelCall& c : model_calls)
    if (!c.retry && !c.synthetic) ++n;
  return n;
}

std::vector<Modality> available_modalities(const QAInstance& instance) {
  std::vector<Modality> out;
  if (!instance.text_passages.empty()) out.push_back(Modality::Text);
  if (instance.table.has_value()) out.push_back(Modality::Table);
  if (instance.image.has_value()) out.push_back(Modality::Image);
  return out;
}

namespace {

std::string escape_cell(const std::string& cell) {
  std::string out;
  out.reserve(cell.size());
  for (char c : cell) {
    if (c == '|') out += "\\|";
    else out += c;
  }
  return out;
}

std::string join_row(const std::vector<std::string>& cells) {
  std::string out;
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) out += " | ";
    out += escape_cell(cells[i]);
  }
  return out;
}

}  // namespace

std::string linearize_table(const TableData& table) {
  std::string out;
  if (!table.title.empty()) {
    out += table.title;
    out += '\n';
  }
  out += join_row(table.headers);
  for (const auto& row : table.rows) {
    out += '\n';
    out += join_row(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON serialization

void to_json(json& j, const TableData& t) {
  j = json{{"title", t.title}, {"headers", t.headers}, {"rows", t.rows}};
}

void from_json(const json& j, TableData& t) {
  t.title = j.value("title", "");
  j.at("headers").get_to(t.headers);
  t.rows = j.value("rows", std::vector<std::vector<std::string>>{});
}

void to_json(json& j, const ImageRef& r) {
  j = json{{"path", r.path}, {"media_type", r.media_type}};
  if (r.caption_hint) j["caption_hint"] = *r.caption_hint;
  // Raw bytes are a runtime-only representation; dataset files carry paths.
}

void from_json(const json& j, ImageRef& r) {
  r.path = j.value("path", "");
  r.media_type = j.value("media_type", "");
  if (j.contains("caption_hint") && !j["caption_hint"].is_null())
    r.caption_hint = j["caption_hint"].get<std::string>();
}

void to_json(json& j, const QAInstance& q) {
  j = json{{"id", q.id},
           {"question", q.question},
           {"text", q.text_passages},
           {"table", q.table ? json(*q.table) : json(nullptr)},
           {"image", q.image ? json(*q.image) : json(nullptr)},
           {"answers", q.gold_answers},
           {"modality_tag", q.gold_modality_tag},
           {"split", q.split}};
}

void from_json(const json& j, QAInstance& q) {
  j.at("id").get_to(q.id);
  j.at("question").get_to(q.question);
  q.text_passages = j.value("text", std::vector<std::string>{});
  if (j.contains("table") && !j["table"].is_null()) q.table = j["table"].get<TableData>();
  else q.table.reset();
  if (j.contains("image") && !j["image"].is_null()) q.image = j["image"].get<ImageRef>();
  else q.image.reset();
  q.gold_answers = j.value("answers", std::vector<std::vector<std::string>>{});
  q.gold_modality_tag = j.value("modality_tag", "");
  q.split = j.value("split", "");
}

void to_json(json& j, const ModalityInsights& m) {
  j = json{{"modality", modality_name(m.modality)},
           {"key_facts", m.key_facts},
           {"cues", m.cues},
           {"gaps", m.gaps},
           {"raw_model_text", m.raw_model_text}};
}

void from_json(const json& j, ModalityInsights& m) {
  auto mod = modality_from_name(j.at("modality").get<std::string>());
  if (!mod) throw std::invalid_argument("unknown modality in insights");
  m.modality = *mod;
  m.key_facts = j.value("key_facts", std::vector<std::string>{});
  m.cues = j.value("cues", std::vector<std::string>{});
  m.gaps = j.value("gaps", std::vector<std::string>{});
  m.raw_model_text = j.value("raw_model_text", "");
}

void to_json(json& j, const SynthesisResult& s) {
  json subs = json::array();
  for (const auto& [q, a] : s.sub_answers) subs.push_back(json::array({q, a}));
  j = json{{"anchor", modality_name(s.anchor)},
           {"insights_used", s.insights_used},
           {"sub_answers", subs},
           {"final_answer", s.final_answer ? json(*s.final_answer) : json(nullptr)},
           {"uncertain", s.uncertain},
           {"reasoning", s.reasoning},
           {"raw_model_text", s.raw_model_text}};
}

void from_json(const json& j, SynthesisResult& s) {
  auto mod = modality_from_name(j.at("anchor").get<std::string>());
  if (!mod) throw std::invalid_argument("unknown anchor modality");
  s.anchor = *mod;
  s.insights_used = j.value("insights_used", ModalityInsights{});
  s.sub_answers.clear();
  for (const auto& pair : j.value("sub_answers", json::array()))
    s.sub_answers.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
  if (j.contains("final_answer") && !j["final_answer"].is_null())
    s.final_answer = j["final_answer"].get<std::string>();
  else
    s.final_answer.reset();
  s.uncertain = j.value("uncertain", false);
  s.reasoning = j.value("reasoning", "");
  s.raw_model_text = j.value("raw_model_text", "");
}

void to_json(json& j, const AggregateDecision& d) {
  json anchors = json::array();
  for (Modality m : d.contributing_anchors) anchors.push_back(modality_name(m));
  j = json{{"final_answer", d.final_answer ? json(*d.final_answer) : json(nullptr)},
           {"rule", decision_rule_name(d.rule)},
           {"rationale", d.rationale},
           {"contributing_anchors", anchors}};
}

void from_json(const json& j, AggregateDecision& d) {
  if (j.contains("final_answer") && !j["final_answer"].is_null())
    d.final_answer = j["final_answer"].get<std::string>();
  else
    d.final_answer.reset();
  auto rule = decision_rule_from_name(j.at("rule").get<std::string>());
  if (!rule) throw std::invalid_argument("unknown decision rule");
  d.rule = *rule;
  d.rationale = j.value("rationale", "");
  d.contributing_anchors.clear();
  for (const auto& name : j.value("contributing_anchors", std::vector<std::string>{})) {
    auto m = modality_from_name(name);
    if (!m) throw std::invalid_argument("unknown anchor modality");
    d.contributing_anchors.push_back(*m);
  }
}

void to_json(json& j, const ModelCall& c) {
  j = json{{"stage", c.stage},
           {"backend", c.backend},
           {"prompt_hash", c.prompt_hash},
           {"latency_ms", c.latency_ms},
           {"retry", c.retry},
           {"synthetic", c.synthetic}};
}

void from_json(const json& j, ModelCall& c) {
  c.stage = j.value("stage", "");
  c.backend = j.value("backend", "");
  c.prompt_hash = j.value("prompt_hash", "");
  c.latency_ms = j.value("latency_ms", std::int64_t{0});
  c.retry = j.value("retry", false);
  c.synthetic = j.value("synthetic", false);
}

void to_json(json& j, const TraceNode& n) {
  j = json{{"depth", n.depth},
           {"text", n.text},
           {"value", n.value},
           {"parent", n.parent},
           {"terminal", n.terminal}};
}

void from_json(const json& j, TraceNode& n) {
  n.depth = j.value("depth", 0);
  n.text = j.value("text", "");
  n.value = j.value("value", 0.0);
  n.parent = j.value("parent", -1);
  n.terminal = j.value("terminal", false);
}

void to_json(json& j, const RunTrace& t) {
  j = json{{"instance_id", t.instance_id},
           {"method", t.method},
           {"stage1", t.stage1},
           {"stage2", t.stage2},
           {"stage3", t.stage3 ? json(*t.stage3) : json(nullptr)},
           {"model_calls", t.model_calls},
           {"prediction", t.prediction ? json(*t.prediction) : json(nullptr)},
           {"parse_failures", t.parse_failures},
           {"failed", t.failed},
           {"error", t.error}};
  if (!t.tot_nodes.empty()) j["tot_nodes"] = t.tot_nodes;
}

void from_json(const json& j, RunTrace& t) {
  t.instance_id = j.value("instance_id", "");
  t.method = j.value("method", "");
  t.stage1 = j.value("stage1", std::vector<ModalityInsights>{});
  t.stage2 = j.value("stage2", std::vector<SynthesisResult>{});
  if (j.contains("stage3") && !j["stage3"].is_null())
    t.stage3 = j["stage3"].get<AggregateDecision>();
  else
    t.stage3.reset();
  t.model_calls = j.value("model_calls", std::vector<ModelCall>{});
  if (j.contains("prediction") && !j["prediction"].is_null())
    t.prediction = j["prediction"].get<std::string>();
  else
    t.prediction.reset();
  t.tot_nodes = j.value("tot_nodes", std::vector<TraceNode>{});
  t.parse_failures = j.value("parse_failures", 0);
  t.failed = j.value("failed", false);
  t.error = j.value("error", "");
}

// ---------------------------------------------------------------------------
// JSONL I/O

namespace {

template <typename T>
std::vector<T> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::vector<T> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line).get<T>());
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

template <typename T>
std::string to_jsonl(const std::vector<T>& items) {
  std::string out;
  for (const T& item : items) {
    out += json(item).dump();
    out += '\n';
  }
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
}

}  // namespace

std::vector<QAInstance> read_instances_jsonl(const std::string& path) {
  return read_jsonl<QAInstance>(path);
}

void write_instances_jsonl(const std::string& path, const std::vector<QAInstance>& instances) {
  write_file(path, to_jsonl(instances));
}

std::vector<RunTrace> read_traces_jsonl(const std::string& path) {
  return read_jsonl<RunTrace>(path);
}

void write_traces_jsonl(const std::string& path, const std::vector<RunTrace>& traces) {
  write_file(path, to_jsonl(traces));
}

std::string traces_to_jsonl(const std::vector<RunTrace>& traces) { return to_jsonl(traces); }

std::string instances_to_jsonl(const std::vector<QAInstance>& instances) {
  return to_jsonl(instances);
}

}  // namespace mammqa
