#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "kgqa/chain_engine.hpp"
#include "kgqa/errors.hpp"
#include "support/test_util.hpp"

using namespace kgqa;

namespace {

KnowledgeGraph family_graph() {
  std::istringstream in(
      "alice|parent_of|bob\n"
      "alice|parent_of|carol\n"
      "bob|parent_of|dave\n"
      "carol|married_to|erin\n"
      "erin|parent_of|frank\n");
  return KnowledgeGraph::load(in);
}

LogicalChain chain_of(const KnowledgeGraph& g, const std::string& key) {
  return LogicalChain::parse_key(key, g);
}

// Reference traversal that rescans the whole triplet list at every hop,
// sharing no code with the adjacency-indexed implementation under test.
std::vector<EntityId> brute_force(const KnowledgeGraph& g, EntityId seed,
                                  const LogicalChain& chain) {
  std::set<EntityId> frontier{seed};
  for (const ChainStep& step : chain.steps()) {
    std::set<EntityId> next;
    for (const Triplet& t : g.triplets()) {
      if (t.relation != step.relation) continue;
      if (step.direction == Direction::forward) {
        if (frontier.count(t.subject)) next.insert(t.object);
      } else {
        if (frontier.count(t.object)) next.insert(t.subject);
      }
    }
    frontier = std::move(next);
    if (frontier.empty()) break;
  }
  return {frontier.begin(), frontier.end()};
}

}  // namespace

TEST_CASE("chain key round-trips through parse_key") {
  KnowledgeGraph g = family_graph();
  LogicalChain chain = chain_of(g, "parent_of:f married_to:f parent_of:b");
  CHECK(chain.length() == 3);
  CHECK(chain.key(g) == "parent_of:f married_to:f parent_of:b");
  CHECK(LogicalChain{}.key(g) == "");
  CHECK(LogicalChain::parse_key("", g).empty());
}

TEST_CASE("parse_key rejects unknown relations and malformed tokens") {
  KnowledgeGraph g = family_graph();
  CHECK_THROWS_AS(LogicalChain::parse_key("missing:f", g), LoadError);
  CHECK_THROWS_AS(LogicalChain::parse_key("parent_of:x", g), LoadError);
  CHECK_THROWS_AS(LogicalChain::parse_key("parent_of", g), LoadError);
}

TEST_CASE("execute_chain walks forward, backward, and multi-hop") {
  KnowledgeGraph g = family_graph();
  EntityId alice = *g.find_entity("alice");
  EntityId dave = *g.find_entity("dave");

  CandidateSet kids = execute_chain(g, {alice}, chain_of(g, "parent_of:f"));
  CHECK(kids.answers() ==
        std::vector<EntityId>{*g.find_entity("bob"), *g.find_entity("carol")});

  CandidateSet parents = execute_chain(g, {dave}, chain_of(g, "parent_of:b"));
  CHECK(parents.answers() == std::vector<EntityId>{*g.find_entity("bob")});

  CandidateSet inlaws = execute_chain(g, {alice}, chain_of(g, "parent_of:f married_to:f"));
  CHECK(inlaws.answers() == std::vector<EntityId>{*g.find_entity("erin")});
}

TEST_CASE("zero-length chain maps each seed to itself") {
  KnowledgeGraph g = family_graph();
  EntityId alice = *g.find_entity("alice");
  CandidateSet out = execute_chain(g, {alice}, LogicalChain{});
  CHECK(out.answers() == std::vector<EntityId>{alice});
  CHECK(out.items().front().edges.empty());
}

TEST_CASE("execute_chain records verifiable edges in step order") {
  KnowledgeGraph g = family_graph();
  EntityId alice = *g.find_entity("alice");
  CandidateSet out = execute_chain(g, {alice}, chain_of(g, "parent_of:f married_to:f"));
  REQUIRE(out.size() == 1);
  const CandidateItem& item = out.items().front();
  REQUIRE(item.edges.size() == 2);
  for (const Triplet& edge : item.edges) CHECK(g.has_triplet(edge));
  CHECK(item.path().front() == item.seed);
  CHECK(item.path().back() == item.answer);
}

TEST_CASE("execute_chain truncates per seed at the cap, keeping low ids") {
  KnowledgeGraph g = family_graph();
  EntityId alice = *g.find_entity("alice");
  CandidateSet capped = execute_chain(g, {alice}, chain_of(g, "parent_of:f"), 1);
  CHECK(capped.answers() == std::vector<EntityId>{*g.find_entity("bob")});
}

TEST_CASE("execute_chain validates arguments") {
  KnowledgeGraph g = family_graph();
  EntityId alice = *g.find_entity("alice");
  CHECK_THROWS_AS(execute_chain(g, {}, chain_of(g, "parent_of:f")), std::invalid_argument);
  CHECK_THROWS_AS(execute_chain(g, {alice}, chain_of(g, "parent_of:f"), 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(execute_chain(g, {EntityId{99}}, chain_of(g, "parent_of:f")),
                  InvalidIdError);
}

TEST_CASE("candidate set deduplicates identical traversals") {
  KnowledgeGraph g = family_graph();
  EntityId alice = *g.find_entity("alice");
  CandidateSet out = execute_chain(g, {alice}, chain_of(g, "parent_of:f"));
  std::size_t before = out.size();
  for (const CandidateItem& item : std::vector<CandidateItem>(out.items())) {
    CHECK_FALSE(out.insert(item));
  }
  CHECK(out.size() == before);
}

TEST_CASE("execution agrees with a full-scan reference on random graphs") {
  kgqa::test::Rng rng(0x5eedu);
  for (int round = 0; round < 10; ++round) {
    std::ostringstream kb;
    std::size_t entities = 8 + rng.below(20);
    std::size_t relations = 2 + rng.below(3);
    std::set<std::string> seen;
    std::size_t triplets = 20 + rng.below(60);
    for (std::size_t i = 0; i < triplets; ++i) {
      std::string line = "e" + std::to_string(rng.below(entities)) + "|r" +
                         std::to_string(rng.below(relations)) + "|e" +
                         std::to_string(rng.below(entities));
      if (seen.insert(line).second) kb << line << "\n";
    }
    std::istringstream in(kb.str());
    KnowledgeGraph g = KnowledgeGraph::load(in);

    std::vector<ChainStep> moves;
    for (std::uint32_t r = 0; r < g.relation_count(); ++r) {
      moves.push_back({RelationId{r}, Direction::forward});
      moves.push_back({RelationId{r}, Direction::backward});
    }
    for (int trial = 0; trial < 40; ++trial) {
      EntityId seed{static_cast<std::uint32_t>(rng.below(g.entity_count()))};
      std::vector<ChainStep> steps;
      std::size_t hops = 1 + rng.below(3);
      for (std::size_t h = 0; h < hops; ++h) steps.push_back(moves[rng.below(moves.size())]);
      LogicalChain chain{steps};
      CandidateSet out = execute_chain(g, {seed}, chain);
      CHECK(out.answers() == brute_force(g, seed, chain));
    }
  }
}

TEST_CASE("mine_chains counts seed-to-answer paths once per pair") {
  KnowledgeGraph g = family_graph();
  std::vector<TrainingPair> pairs{
      {"children-of", "alice", {"bob", "carol"}},
      {"children-of", "bob", {"dave"}},
      {"spouse-of", "carol", {"erin"}},
  };
  MiningReport report;
  std::vector<MinedChain> mined = mine_chains(g, pairs, 2, &report);
  CHECK(report.pairs_total == 3);
  CHECK(report.pairs_used == 3);
  CHECK(report.skipped.empty());

  auto frequency_of = [&](const std::string& tid, const std::string& key) -> std::uint64_t {
    for (const MinedChain& m : mined) {
      if (m.template_id == tid && m.chain.key(g) == key) return m.frequency;
    }
    return 0;
  };
  CHECK(frequency_of("children-of", "parent_of:f") == 2);
  CHECK(frequency_of("spouse-of", "married_to:f") == 1);
  // No detour of length two ends at a gold answer in this graph: children
  // have no outgoing edges back, and alice has no parents to wander through.
  CHECK(mined.size() == 2);
}

TEST_CASE("mine_chains skips and reports pairs that cannot anchor") {
  KnowledgeGraph g = family_graph();
  std::vector<TrainingPair> pairs{
      {"children-of", "nobody", {"bob"}},
      {"children-of", "alice", {"ghost"}},
      {"children-of", "alice", {"bob"}},
  };
  MiningReport report;
  std::vector<MinedChain> mined = mine_chains(g, pairs, 1, &report);
  CHECK(report.pairs_total == 3);
  CHECK(report.pairs_used == 1);
  CHECK(report.skipped.size() == 2);
  REQUIRE(!mined.empty());
  CHECK(mined.front().frequency == 1);
}

TEST_CASE("mine_chains validates max_hops") {
  KnowledgeGraph g = family_graph();
  std::vector<TrainingPair> pairs{{"t", "alice", {"bob"}}};
  CHECK_THROWS_AS(mine_chains(g, pairs, 0), std::invalid_argument);
  CHECK_THROWS_AS(mine_chains(g, pairs, 5), std::invalid_argument);
}

TEST_CASE("build_projection assigns each chain to its argmax template") {
  KnowledgeGraph g = family_graph();
  LogicalChain fwd = chain_of(g, "parent_of:f");
  LogicalChain bwd = chain_of(g, "parent_of:b");
  std::vector<MinedChain> mined{
      {"strong", fwd, 5},
      {"weak", fwd, 2},
      {"weak", bwd, 3},
  };
  Projection p = build_projection(mined);
  REQUIRE(p.chains_for("strong"));
  REQUIRE(p.chains_for("weak"));
  CHECK(p.chains_for("strong")->size() == 1);
  CHECK(p.chains_for("weak")->size() == 1);
  CHECK(p.chains_for("weak")->front().chain == bwd);
  CHECK(p.chains_for("missing") == nullptr);
}

TEST_CASE("build_projection breaks frequency ties toward the smaller template id") {
  KnowledgeGraph g = family_graph();
  LogicalChain fwd = chain_of(g, "parent_of:f");
  std::vector<MinedChain> mined{
      {"zeta", fwd, 4},
      {"alpha", fwd, 4},
  };
  Projection p = build_projection(mined);
  CHECK(p.chains_for("alpha") != nullptr);
  CHECK(p.chains_for("zeta") == nullptr);
}

TEST_CASE("projection orders a template's chains by frequency then chain") {
  KnowledgeGraph g = family_graph();
  std::vector<MinedChain> mined{
      {"t", chain_of(g, "parent_of:b"), 3},
      {"t", chain_of(g, "married_to:f"), 7},
      {"t", chain_of(g, "parent_of:f"), 3},
  };
  Projection p = build_projection(mined);
  const std::vector<ProjectionEntry>* chains = p.chains_for("t");
  REQUIRE(chains);
  REQUIRE(chains->size() == 3);
  CHECK((*chains)[0].chain.key(g) == "married_to:f");
  CHECK((*chains)[1].chain.key(g) == "parent_of:f");
  CHECK((*chains)[2].chain.key(g) == "parent_of:b");
}

TEST_CASE("projection text form round-trips byte for byte") {
  KnowledgeGraph g = family_graph();
  std::vector<MinedChain> mined{
      {"a", chain_of(g, "parent_of:f"), 2},
      {"b", chain_of(g, "married_to:f parent_of:f"), 1},
  };
  Projection p = build_projection(mined);

  std::ostringstream first;
  p.serialize(first, g, {"a", "b", "empty"});
  CHECK(first.str().rfind("kgqa-projection v1\n", 0) == 0);
  CHECK(first.str().find("template\tempty\n") != std::string::npos);

  std::istringstream back(first.str());
  Projection reparsed = Projection::parse(back, g);
  CHECK(reparsed == p);

  std::ostringstream second;
  reparsed.serialize(second, g, {"a", "b", "empty"});
  CHECK(second.str() == first.str());
}

TEST_CASE("projection parse rejects malformed input") {
  KnowledgeGraph g = family_graph();

  std::istringstream bad_header("nonsense v9\n");
  CHECK_THROWS_AS(Projection::parse(bad_header, g), LoadError);

  std::istringstream orphan_chain("kgqa-projection v1\nchain\t3\tparent_of:f\n");
  CHECK_THROWS_AS(Projection::parse(orphan_chain, g), LoadError);

  std::istringstream bad_relation("kgqa-projection v1\ntemplate\tt\nchain\t3\tghost:f\n");
  CHECK_THROWS_AS(Projection::parse(bad_relation, g), LoadError);

  std::istringstream bad_freq("kgqa-projection v1\ntemplate\tt\nchain\tmany\tparent_of:f\n");
  CHECK_THROWS_AS(Projection::parse(bad_freq, g), LoadError);
}

TEST_CASE("bundled movie projection parses against the movie graph") {
  KnowledgeGraph g = KnowledgeGraph::load_file(kgqa::test::fixture_path("movie.kb"));
  Projection p = Projection::parse_file(kgqa::test::fixture_path("movie.projection.txt"), g);
  CHECK(p.template_count() == 6);
  const std::vector<ProjectionEntry>* chains = p.chains_for("director-of");
  REQUIRE(chains);
  CHECK(chains->front().chain.key(g) == "directed_by:f");
  CHECK(chains->front().frequency == 16);
}
