#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mammqa/backends.hpp"
#include "mammqa/core.hpp"
#include "mammqa/prompting.hpp"

namespace mammqa {

struct PipelineConfig {
  std::shared_ptr<ChatBackend> expert_backend;
  std::shared_ptr<ChatBackend> synthesis_backend;
  std::shared_ptr<ChatBackend> aggregator_backend;
  // Withholding the question from the aggregator is the default; it then
  // judges purely on the synthesis agents' evidence.
  bool aggregator_sees_question = false;
  GenParams params;
  const PromptLibrary* prompts = nullptr;
  std::set<std::string> extra_abstention_markers;
};

// Collects agent activations (and format-retry bookkeeping) across stages.
struct CallLog {
  std::vector<ModelCall> calls;
  int parse_failures = 0;
};

// Stage I: one expert call for one modality. The expert extracts facts,
// cues and gaps; it never answers.
ModalityInsights stage1_extract(const QAInstance& instance, Modality modality,
                                const PipelineConfig& cfg, CallLog* log = nullptr);

// Stage II: one synthesis call with `anchor`'s insights plus the raw content
// of every other available modality. Absent modalities bind as the literal
// "not provided".
SynthesisResult stage2_synthesize(const QAInstance& instance, Modality anchor,
                                  const ModalityInsights& anchor_insights,
                                  const PipelineConfig& cfg, CallLog* log = nullptr);

// Stage III: the decision cascade. Rules 0-2 (all-abstained, majority,
// confident-over-uncertain) are decided deterministically with no model
// call; only the all-answers-differ case consults the aggregator backend,
// and that prompt carries answers and reasoning only, never raw inputs.
AggregateDecision stage3_aggregate(const std::vector<SynthesisResult>& results,
                                   const std::optional<std::string>& question,
                                   const PipelineConfig& cfg, CallLog* log = nullptr);

// Full three-stage run over one instance. Stage errors are captured into the
// trace (failed = true) rather than thrown, so batches keep going.
RunTrace run_pipeline(const QAInstance& instance, const PipelineConfig& cfg);

// Bounded worker pool over instances; output order equals input order and
// results are independent of the parallelism level.
std::vector<RunTrace> run_batch(const std::vector<QAInstance>& instances,
                                const PipelineConfig& cfg, int parallelism);
std::vector<RunTrace> run_batch(const std::vector<QAInstance>& instances, int parallelism,
                                const std::function<RunTrace(const QAInstance&)>& runner);

// Insight text as it appears inside synthesis prompts.
std::string render_insights(const ModalityInsights& insights);

// Synthesis blocks as they appear inside the rule-3 aggregator prompt.
std::string render_synthesis_blocks(const std::vector<SynthesisResult>& results);

}  // namespace mammqa
