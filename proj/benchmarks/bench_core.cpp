#include <benchmark/benchmark.h>

#include <memory>
#include <string>
#include <vector>

#include "kgqa/chain_engine.hpp"
#include "kgqa/kg_store.hpp"
#include "kgqa/template_index.hpp"

namespace {

using namespace kgqa;

const KnowledgeGraph& movie_graph() {
  static KnowledgeGraph graph =
      KnowledgeGraph::load_file(std::string(KGQA_FIXTURE_DIR) + "/movie.kb");
  return graph;
}

const TemplateIndex& movie_index() {
  static TemplateIndex index(
      TemplateRegistry::load_file(std::string(KGQA_FIXTURE_DIR) + "/movie.templates.tsv"),
      std::make_shared<HashedEmbedder>(1024));
  return index;
}

void BM_chain_execution_two_hop(benchmark::State& state) {
  const KnowledgeGraph& graph = movie_graph();
  LogicalChain chain = LogicalChain::parse_key("directed_by:b starred_actors:f", graph);
  std::vector<EntityId> seeds{graph.find_entity("Douglas Sirk").value()};
  for (auto _ : state) {
    CandidateSet out = execute_chain(graph, seeds, chain);
    benchmark::DoNotOptimize(out.answers());
  }
}
BENCHMARK(BM_chain_execution_two_hop);

void BM_chain_execution_three_hop(benchmark::State& state) {
  const KnowledgeGraph& graph = movie_graph();
  LogicalChain chain =
      LogicalChain::parse_key("directed_by:f directed_by:b starred_actors:f", graph);
  std::vector<EntityId> seeds{graph.find_entity("Written on the Wind").value()};
  for (auto _ : state) {
    CandidateSet out = execute_chain(graph, seeds, chain);
    benchmark::DoNotOptimize(out.answers());
  }
}
BENCHMARK(BM_chain_execution_three_hop);

void BM_template_match(benchmark::State& state) {
  const TemplateIndex& index = movie_index();
  for (auto _ : state) {
    auto matches = index.match("who was the director of [mask]?", 3);
    benchmark::DoNotOptimize(matches);
  }
}
BENCHMARK(BM_template_match);

void BM_hashed_embedding(benchmark::State& state) {
  HashedEmbedder embedder(1024);
  const std::string text =
      "which famous actors starred in the movies made by the director of [mask]?";
  for (auto _ : state) {
    auto vec = embedder.embed(text);
    benchmark::DoNotOptimize(vec);
  }
}
BENCHMARK(BM_hashed_embedding);

void BM_mining(benchmark::State& state) {
  const KnowledgeGraph& graph = movie_graph();
  std::vector<TrainingPair> pairs;
  for (std::size_t i = 0; i < graph.triplets().size() && pairs.size() < 16; i += 4) {
    const Triplet& t = graph.triplets()[i];
    pairs.push_back({"bench-template", graph.entity_surface(t.subject),
                     {graph.entity_surface(t.object)}});
  }
  for (auto _ : state) {
    auto mined = mine_chains(graph, pairs, 3);
    benchmark::DoNotOptimize(mined);
  }
}
BENCHMARK(BM_mining);

}  // namespace

BENCHMARK_MAIN();
