#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kgqa/chain_engine.hpp"
#include "kgqa/kg_store.hpp"
#include "kgqa/model_gateway.hpp"
#include "kgqa/template_index.hpp"

namespace kgqa {

enum class ContextMode { tuple_explained, serialized_text };

std::string_view context_mode_name(ContextMode mode);
ContextMode parse_context_mode(std::string_view name);  // "tuple" | "serialized"

// Default mode policy: tuple-explained suits instruction-following gateway
// models; deterministic local backends get serialized text.
ContextMode resolve_context_mode(std::optional<ContextMode> configured,
                                 BackendKind reasoner_kind);

inline constexpr std::string_view kReasonInstruction =
    "Use the following pieces of context to answer the users question. If you "
    "don't know the answer, just say that you don't know, don't try to make up "
    "an answer.";

inline constexpr std::string_view kContextSeparator = "-------------";

inline constexpr std::string_view kNoFactsLine =
    "No facts were found for this question.";

// Explains the tuple layout before the fact lines.
inline constexpr std::string_view kTuplePreamble =
    "The context lists fact paths as tuples in the form (head entity, relation "
    "path, tail entity).\nA relation prefixed with ~ is traversed in the "
    "reverse direction.";

inline constexpr std::string_view kReasonRetryReminder =
    "List only entity names taken from the context, one per line.";

// Whitespace-delimited token count; the unit of the context budget.
std::size_t count_tokens(std::string_view text);

// One context line for a candidate. serialized_text joins the hop sentences
// with ". " and a trailing period; tuple_explained renders
// "(seed, rel1/~rel2/..., answer)" with ~ marking backward hops.
std::string candidate_line(const KnowledgeGraph& graph, const CandidateItem& item,
                           ContextMode mode);

struct ReasoningContext {
  ContextMode mode = ContextMode::serialized_text;
  std::string text;
  std::vector<std::string> lines;  // kept candidate lines, in priority order
  CandidateSet kept;
  std::size_t token_budget = 0;
  // Every subject/object surface of the kept items, normalized/sorted/unique;
  // selections are filtered to this set.
  std::vector<std::string> answer_universe;
};

// Orders candidates by (frequency desc, answer asc, seed asc, chain asc) and
// keeps the longest prefix whose lines fit the token budget. The tuple
// preamble is always kept and counted. No candidates yields kNoFactsLine.
ReasoningContext build_context(const KnowledgeGraph& graph, const CandidateSet& candidates,
                               ContextMode mode, std::size_t token_budget);

// Answer extraction from a model reply: a JSON string array when present,
// otherwise non-empty lines with list bullets stripped (a single line splits
// on ", "). Results are normalized and deduplicated in reply order.
std::vector<std::string> parse_answer_list(std::string_view reply);

// True when the reply declines to answer ("don't know" and variants).
bool is_dont_know(std::string_view reply);

struct Selection {
  std::vector<std::string> answers;  // surfaces, in selection order
  bool abstained = false;
  std::string diagnostic;
};

class Reasoner {
 public:
  virtual ~Reasoner() = default;

  // question: the sub-question with generated refs substituted, as asked.
  // masked_question: the mention-masked form used for template lookups.
  // Implementations must be safe for concurrent calls.
  virtual Selection select(const KnowledgeGraph& graph, const std::string& question,
                           const std::string& masked_question,
                           const CandidateSet& candidates) const = 0;

  virtual std::string name() const = 0;
};

// Asks a model to pick answers out of the built context. Replies that parse
// to nothing usable trigger one retry with a reminder; answers outside the
// context's answer universe are dropped.
class ModelReasoner : public Reasoner {
 public:
  ModelReasoner(std::shared_ptr<Backend> backend, ContextMode mode,
                std::size_t token_budget);

  Selection select(const KnowledgeGraph& graph, const std::string& question,
                   const std::string& masked_question,
                   const CandidateSet& candidates) const override;

  std::string name() const override;

 private:
  std::shared_ptr<Backend> backend_;
  ContextMode mode_;
  std::size_t token_budget_;
};

// Deterministic reasoner for tests. When the masked question exactly matches
// a template pattern with a known gold chain, it selects the candidates
// produced by that chain; otherwise it selects every candidate answer.
class ChainOracleReasoner : public Reasoner {
 public:
  ChainOracleReasoner(const TemplateRegistry& registry,
                      std::map<std::string, LogicalChain> gold_chains);

  // TSV lines "template_id<TAB>chain_key"; '#' comments and blanks skipped.
  static std::map<std::string, LogicalChain> load_gold_chains(const std::string& path,
                                                              const KnowledgeGraph& graph);

  Selection select(const KnowledgeGraph& graph, const std::string& question,
                   const std::string& masked_question,
                   const CandidateSet& candidates) const override;

  std::string name() const override { return "chain-oracle"; }

 private:
  const TemplateRegistry& registry_;
  std::map<std::string, LogicalChain> gold_chains_;
};

// Scores every graph triplet against a question embedding so low-frequency
// facts can supplement chain execution results. Triplet embeddings are
// built once, on first use.
class DenseTripletIndex {
 public:
  DenseTripletIndex(const KnowledgeGraph& graph, std::shared_ptr<const Embedder> embedder);

  // Top `budget` triplets by cosine, descending; ties keep graph order.
  std::vector<Triplet> supplement(std::string_view question, std::size_t budget) const;

 private:
  void ensure_embeddings() const;

  const KnowledgeGraph& graph_;
  std::shared_ptr<const Embedder> embedder_;
  mutable std::once_flag once_;
  mutable std::vector<std::vector<double>> embeddings_;
  mutable std::mutex embed_mutex_;
};

// Single-hop candidates for dense supplements (frequency 0, dense flag set).
std::vector<CandidateItem> dense_candidates(const KnowledgeGraph& graph,
                                            const std::vector<Triplet>& triplets);

// Inserts extras into base; duplicates of existing items are dropped.
void merge_candidates(CandidateSet& base, const std::vector<CandidateItem>& extras);

}  // namespace kgqa
