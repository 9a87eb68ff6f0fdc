#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace mammqa {

// Evidence modalities, in the fixed iteration order used everywhere
// (traces, prompts and caches depend on this order being stable).
enum class Modality { Text = 0, Table = 1, Image = 2 };

// Lowercase name used in prompts and JSON ("text", "table", "image").
const char* modality_name(Modality m);
std::optional<Modality> modality_from_name(const std::string& name);

// Short tag component used in report buckets ("Txt", "Tb", "Img").
const char* modality_tag(Modality m);

// Composes a report tag from a modality set, e.g. {Text, Table} -> "Tb|Txt".
// Component order is Tb, Txt, Img, matching the report column naming.
std::string modality_signature(const std::vector<Modality>& modalities);

struct TableData {
  std::string title;  // may be empty
  std::vector<std::string> headers;
  std::vector<std::vector<std::string>> rows;  // every row has headers.size() cells

  bool operator==(const TableData&) const = default;
};

// Reference to an image, either by path or by raw bytes. Images are opaque
// to the engine; they pass through to backends without decoding.
struct ImageRef {
  std::string path;                  // empty when bytes are inlined
  std::vector<std::uint8_t> bytes;   // non-empty => media_type required
  std::string media_type;            // e.g. "image/png"
  std::optional<std::string> caption_hint;

  bool has_bytes() const { return !bytes.empty(); }
  // Returns a copy with bytes loaded from `path` if they are not inlined yet.
  ImageRef with_loaded_bytes() const;

  bool operator==(const ImageRef&) const = default;
};

struct QAInstance {
  std::string id;
  std::string question;
  std::vector<std::string> text_passages;
  std::optional<TableData> table;
  std::optional<ImageRef> image;
  // Gold answer aliases: each alias is itself a list of strings (a single
  // answer, or an answer list that is matched as a multiset).
  std::vector<std::vector<std::string>> gold_answers;
  std::string gold_modality_tag;  // dataset label like "Tb|Txt"; may be empty
  std::string split;

  bool operator==(const QAInstance&) const = default;
};

// Stage I output: what one modality expert extracted from its modality.
struct ModalityInsights {
  Modality modality = Modality::Text;
  std::vector<std::string> key_facts;
  std::vector<std::string> cues;
  std::vector<std::string> gaps;
  std::string raw_model_text;

  bool operator==(const ModalityInsights&) const = default;
};

// Stage II output: one synthesis pass anchored on a single modality.
struct SynthesisResult {
  Modality anchor = Modality::Text;
  ModalityInsights insights_used;
  std::vector<std::pair<std::string, std::string>> sub_answers;
  std::optional<std::string> final_answer;  // absent = abstention
  bool uncertain = false;                   // always true when abstaining
  std::string reasoning;
  std::string raw_model_text;

  bool abstained() const { return !final_answer.has_value(); }

  bool operator==(const SynthesisResult&) const = default;
};

enum class DecisionRule { Majority, ConfidentOverUncertain, BestRationale, AllAbstained };

const char* decision_rule_name(DecisionRule r);
std::optional<DecisionRule> decision_rule_from_name(const std::string& name);

// Stage III output.
struct AggregateDecision {
  std::optional<std::string> final_answer;
  DecisionRule rule = DecisionRule::AllAbstained;
  std::string rationale;
  std::vector<Modality> contributing_anchors;

  bool operator==(const AggregateDecision&) const = default;
};

// One agent activation. Rules 0-2 of the aggregation cascade are decided
// without a backend call; they still record an entry with synthetic = true
// so activation counts follow the 2m+1 law.
struct ModelCall {
  std::string stage;        // "stage1/text", "stage2/table", "stage3", "cot", ...
  std::string backend;      // backend label
  std::string prompt_hash;  // empty for synthetic entries
  std::int64_t latency_ms = 0;
  bool retry = false;
  bool synthetic = false;

  bool operator==(const ModelCall&) const = default;
};

// Node record emitted by tree-search baselines into the trace.
struct TraceNode {
  int depth = 0;
  std::string text;
  double value = 0.0;
  int parent = -1;  // index into the node list, -1 for first-level nodes
  bool terminal = false;

  bool operator==(const TraceNode&) const = default;
};

struct RunTrace {
  std::string instance_id;
  std::string method;  // "mammqa", "cot", "cot-nocontext", "capcot", "tot"
  std::vector<ModalityInsights> stage1;
  std::vector<SynthesisResult> stage2;
  std::optional<AggregateDecision> stage3;
  std::vector<ModelCall> model_calls;
  std::optional<std::string> prediction;
  std::vector<TraceNode> tot_nodes;
  int parse_failures = 0;  // responses that missed the answer header even after retry
  bool failed = false;
  std::string error;

  // Agent activations: non-retry entries, synthetic stage-3 entry included.
  int activation_count() const;
  // Actual backend calls (non-retry, non-synthetic).
  int backend_call_count() const;

  bool operator==(const RunTrace&) const = default;
};

// Present modalities of an instance in fixed Text, Table, Image order.
// Never empty for a well-formed instance.
std::vector<Modality> available_modalities(const QAInstance& instance);

// Deterministic textual rendering of a table: optional title line, header
// row, one line per data row, cells joined with " | ". A literal "|" inside
// a cell is escaped as "\|".
std::string linearize_table(const TableData& table);

// JSON (de)serialization. Canonical dataset and trace files are JSONL with
// one object per line; keys are emitted in sorted order so equal values
// produce identical bytes.
void to_json(nlohmann::json& j, const TableData& t);
void from_json(const nlohmann::json& j, TableData& t);
void to_json(nlohmann::json& j, const ImageRef& r);
void from_json(const nlohmann::json& j, ImageRef& r);
void to_json(nlohmann::json& j, const QAInstance& q);
void from_json(const nlohmann::json& j, QAInstance& q);
void to_json(nlohmann::json& j, const ModalityInsights& m);
void from_json(const nlohmann::json& j, ModalityInsights& m);
void to_json(nlohmann::json& j, const SynthesisResult& s);
void from_json(const nlohmann::json& j, SynthesisResult& s);
void to_json(nlohmann::json& j, const AggregateDecision& d);
void from_json(const nlohmann::json& j, AggregateDecision& d);
void to_json(nlohmann::json& j, const ModelCall& c);
void from_json(const nlohmann::json& j, ModelCall& c);
void to_json(nlohmann::json& j, const TraceNode& n);
void from_json(const nlohmann::json& j, TraceNode& n);
void to_json(nlohmann::json& j, const RunTrace& t);
void from_json(const nlohmann::json& j, RunTrace& t);

std::vector<QAInstance> read_instances_jsonl(const std::string& path);
void write_instances_jsonl(const std::string& path, const std::vector<QAInstance>& instances);
std::vector<RunTrace> read_traces_jsonl(const std::string& path);
void write_traces_jsonl(const std::string& path, const std::vector<RunTrace>& traces);

// Serializes a batch of traces exactly as write_traces_jsonl writes them.
std::string traces_to_jsonl(const std::vector<RunTrace>& traces);
std::string instances_to_jsonl(const std::vector<QAInstance>& instances);

}  // namespace mammqa
