#pragma once

#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "kgqa/chain_engine.hpp"
#include "kgqa/decomposer.hpp"
#include "kgqa/kg_store.hpp"
#include "kgqa/model_gateway.hpp"
#include "kgqa/reasoner.hpp"
#include "kgqa/template_index.hpp"

namespace kgqa {

// Instruction sent to the summarizer backend together with the rendered log.
inline constexpr std::string_view kSummarizeInstruction =
    "With the task execution logs, the AI assistant needs to describe the "
    "process and inference results. Please first think carefully and directly "
    "answer my request based on the inference results. Then please detail your "
    "workflow step by step including the used models and inference results for "
    "my request in your friendly tone. Please filter out information that is "
    "not relevant to my request. If there is nothing in the results, please "
    "tell me you can't make it.";

inline constexpr std::string_view kNarrativePrefix = "Based on the inference results";

inline constexpr std::string_view kInabilityNarrative =
    "Based on the inference results, I can't make it: no answers were found "
    "for this request.";

enum class DensePolicy { always, on_empty };

struct PipelineConfig {
  std::size_t top_k = 3;
  std::size_t candidate_cap = 512;
  std::optional<ContextMode> mode;   // unset: resolved per reasoner backend kind
  std::size_t token_budget = 3000;
  std::size_t dense_budget = 0;      // 0 disables the dense supplement
  DensePolicy dense_policy = DensePolicy::always;
  std::size_t projection_top_n = 0;  // 0 keeps every projected chain
};

struct ChainExecutionRecord {
  std::string template_id;
  LogicalChain chain;
  std::string chain_key;  // replayable via LogicalChain::parse_key
  std::uint64_t frequency = 0;
  std::size_t produced = 0;  // candidates returned by this execution
};

struct StepRecord {
  std::size_t id = 0;
  std::string question;     // plan step text
  std::string substituted;  // generated refs replaced by prior answers
  std::string masked;       // mention-masked form used for template matching
  std::vector<std::string> seed_surfaces;     // seeds found in the graph
  std::vector<std::string> unresolved_seeds;  // seeds absent from the graph
  std::vector<TemplateMatch> matches;
  std::vector<ChainExecutionRecord> executed;
  std::size_t dense_added = 0;
  std::size_t candidate_count = 0;  // merged, deduplicated
  Selection selection;
  bool unanswerable = false;
  double duration_ms = 0.0;  // kept out of render/export so both stay byte-stable
};

struct ExecutionLog {
  std::string question;
  Plan plan;
  std::vector<StepRecord> steps;
  std::vector<std::string> final_answers;  // union over terminal steps
  std::string decomposer_backend;
  std::string reasoner_backend;
  std::string summarizer_backend;
  std::string failure;  // set when decomposition failed
};

struct Response {
  std::vector<std::string> answers;
  std::string narrative;
  ExecutionLog log;
};

// Plain-text log view: the summarizer input and the --log dump body.
std::string render_log(const ExecutionLog& log);

// Deterministic narrative over the log; never fails. Empty final answers
// yield kInabilityNarrative.
std::string template_narrative(const ExecutionLog& log);

// Narrative via the summarizer backend; nullptr or a gateway failure falls
// back to template_narrative. Final answers missing from the narrative are
// appended so every answer is always mentioned.
std::string generate_response(const ExecutionLog& log, Backend* summarizer);

// Line-delimited structured records (meta, one per step, final). Stable field
// names, no timings.
void export_log(const ExecutionLog& log, std::ostream& out);

class Pipeline {
 public:
  Pipeline(const KnowledgeGraph& graph, std::shared_ptr<const TemplateIndex> templates,
           Projection projection, std::shared_ptr<Backend> decomposer_backend,
           std::shared_ptr<const Reasoner> reasoner,
           std::shared_ptr<Backend> summarizer_backend, PipelineConfig config);

  // The four stages end to end. Decomposition failure and per-step
  // abstention yield an inability response, not an exception. Safe for
  // concurrent calls.
  Response answer(const std::string& question) const;

  const PipelineConfig& config() const { return config_; }
  const KnowledgeGraph& graph() const { return graph_; }

 private:
  StepRecord run_step(const PlanStep& step,
                      const std::map<std::size_t, std::vector<std::string>>& prior,
                      const std::map<std::size_t, std::string>& rendered) const;

  const KnowledgeGraph& graph_;
  std::shared_ptr<const TemplateIndex> templates_;
  Projection projection_;
  Decomposer decomposer_;
  std::shared_ptr<const Reasoner> reasoner_;
  std::shared_ptr<Backend> summarizer_;
  PipelineConfig config_;
  std::unique_ptr<DenseTripletIndex> dense_;
  std::string decomposer_name_;
  std::string reasoner_name_;
  std::string summarizer_name_;
};

}  // namespace kgqa
