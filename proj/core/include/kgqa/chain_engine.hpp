#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kgqa/kg_store.hpp"

namespace kgqa {

struct ChainStep {
  RelationId relation;
  Direction direction = Direction::forward;

  friend constexpr auto operator<=>(const ChainStep&, const ChainStep&) = default;
};

// Ordered multi-hop traversal recipe. A zero-length chain maps every seed to
// itself.
class LogicalChain {
 public:
  LogicalChain() = default;
  explicit LogicalChain(std::vector<ChainStep> steps) : steps_(std::move(steps)) {}

  std::size_t length() const { return steps_.size(); }
  bool empty() const { return steps_.empty(); }
  const std::vector<ChainStep>& steps() const { return steps_; }

  // Space-joined "<relation>:f" / "<relation>:b" tokens.
  std::string key(const KnowledgeGraph& graph) const;

  // Inverse of key(); throws LoadError(line 0) on an unknown relation or a
  // malformed token.
  static LogicalChain parse_key(std::string_view key, const KnowledgeGraph& graph);

  friend auto operator<=>(const LogicalChain&, const LogicalChain&) = default;

 private:
  std::vector<ChainStep> steps_;
};

// One (seed, chain, answer) candidate. edges holds the traversed triplets in
// step order, each in its stored orientation, so the item stays verifiable
// edge-by-edge against the graph. Dense supplements carry their retrieved
// triplet with an empty chain.
struct CandidateItem {
  EntityId seed;
  LogicalChain chain;
  EntityId answer;
  std::vector<Triplet> edges;
  std::uint64_t frequency = 0;  // owning chain's projection frequency, 0 for dense
  bool dense = false;

  // Entity sequence seed..answer implied by edges.
  std::vector<EntityId> path() const;

  friend bool operator==(const CandidateItem&, const CandidateItem&) = default;
};

// Insertion-ordered set of candidates. Two items with the same seed, answer
// and edge sequence are one candidate; later duplicates are dropped.
class CandidateSet {
 public:
  bool insert(CandidateItem item);
  const std::vector<CandidateItem>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }

  // Sorted unique answer ids.
  std::vector<EntityId> answers() const;

 private:
  std::vector<CandidateItem> items_;
  std::set<std::vector<std::uint32_t>> identities_;  // packed (seed, answer, edges)
};

// Breadth-wise frontier execution of a chain from every seed. Per seed the
// answer set is truncated at cap entries, ascending by entity id; each kept
// answer retains one deterministic traversal path. Throws
// std::invalid_argument for empty seeds or cap == 0, InvalidIdError for an
// unknown seed or relation.
CandidateSet execute_chain(const KnowledgeGraph& graph, const std::vector<EntityId>& seeds,
                           const LogicalChain& chain, std::size_t cap = 512);

// Surface-level training pair for chain mining.
struct TrainingPair {
  std::string template_id;
  std::string seed;
  std::vector<std::string> answers;
};

struct MinedChain {
  std::string template_id;
  LogicalChain chain;
  std::uint64_t frequency = 0;
};

struct MiningReport {
  std::size_t pairs_total = 0;
  std::size_t pairs_used = 0;
  std::vector<std::string> skipped;  // one message per skipped pair
};

// Enumerates every relation-direction path of length 1..max_hops that leads
// from a pair's seed to at least one of its gold answers, counting each
// (template, chain) at most once per pair. Pairs whose seed (or whole answer
// set) is absent from the graph are skipped and reported. Output is sorted by
// (template id, chain). max_hops must be in [1, 4].
std::vector<MinedChain> mine_chains(const KnowledgeGraph& graph,
                                    const std::vector<TrainingPair>& pairs, int max_hops,
                                    MiningReport* report = nullptr);

struct ProjectionEntry {
  LogicalChain chain;
  std::uint64_t frequency = 0;

  friend bool operator==(const ProjectionEntry&, const ProjectionEntry&) = default;
};

// template id -> chains, highest observed frequency first. Built by assigning
// each chain to its argmax-frequency template (ties to the lexicographically
// smallest template id) and inverting that assignment.
class Projection {
 public:
  Projection() = default;
  explicit Projection(std::map<std::string, std::vector<ProjectionEntry>> entries)
      : entries_(std::move(entries)) {}

  const std::vector<ProjectionEntry>* chains_for(const std::string& template_id) const;
  const std::map<std::string, std::vector<ProjectionEntry>>& entries() const { return entries_; }
  std::size_t template_count() const { return entries_.size(); }

  // Versioned text form; byte-stable for identical inputs. include_empty
  // lists template ids to emit even when they own no chains.
  void serialize(std::ostream& out, const KnowledgeGraph& graph,
                 const std::vector<std::string>& include_empty = {}) const;
  static Projection parse(std::istream& in, const KnowledgeGraph& graph);
  static Projection parse_file(const std::string& path, const KnowledgeGraph& graph);

  friend bool operator==(const Projection&, const Projection&) = default;

 private:
  std::map<std::string, std::vector<ProjectionEntry>> entries_;
};

Projection build_projection(const std::vector<MinedChain>& mined);

}  // namespace kgqa
