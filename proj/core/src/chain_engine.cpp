#include "kgqa/chain_engine.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "kgqa/errors.hpp"

namespace kgqa {

std::string LogicalChain::key(const KnowledgeGraph& graph) const {
  std::string out;
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    if (i) out += ' ';
    out += graph.relation_surface(steps_[i].relation);
    out += ':';
    out += direction_code(steps_[i].direction);
  }
  return out;
}

LogicalChain LogicalChain::parse_key(std::string_view key, const KnowledgeGraph& graph) {
  std::vector<ChainStep> steps;
  std::size_t pos = 0;
  while (pos < key.size()) {
    auto end = key.find(' ', pos);
    if (end == std::string_view::npos) end = key.size();
    std::string_view token = key.substr(pos, end - pos);
    pos = end + 1;
    if (token.empty()) continue;
    auto colon = token.rfind(':');
    if (colon == std::string_view::npos || colon + 2 != token.size()) {
      throw LoadError("malformed chain step token: " + std::string(token), 0);
    }
    auto dir = direction_from_code(token[colon + 1]);
    if (!dir) throw LoadError("malformed chain step token: " + std::string(token), 0);
    auto rel = graph.find_relation(token.substr(0, colon));
    if (!rel) {
      throw LoadError("unknown relation in chain: " + std::string(token.substr(0, colon)), 0);
    }
    steps.push_back(ChainStep{*rel, *dir});
  }
  return LogicalChain(std::move(steps));
}

std::vector<EntityId> CandidateItem::path() const {
  std::vector<EntityId> out;
  out.push_back(seed);
  if (!chain.empty()) {
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const bool fwd = chain.steps()[i].direction == Direction::forward;
      out.push_back(fwd ? edges[i].object : edges[i].subject);
    }
  } else if (answer != seed || !edges.empty()) {
    out.push_back(answer);
  }
  return out;
}

bool CandidateSet::insert(CandidateItem item) {
  std::vector<std::uint32_t> identity;
  identity.reserve(2 + item.edges.size() * 3);
  identity.push_back(item.seed.value);
  identity.push_back(item.answer.value);
  for (const Triplet& t : item.edges) {
    identity.push_back(t.subject.value);
    identity.push_back(t.relation.value);
    identity.push_back(t.object.value);
  }
  if (!identities_.insert(std::move(identity)).second) return false;
  items_.push_back(std::move(item));
  return true;
}

std::vector<EntityId> CandidateSet::answers() const {
  std::vector<EntityId> out;
  out.reserve(items_.size());
  for (const auto& item : items_) out.push_back(item.answer);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

CandidateSet execute_chain(const KnowledgeGraph& graph, const std::vector<EntityId>& seeds,
                           const LogicalChain& chain, std::size_t cap) {
  if (seeds.empty()) throw std::invalid_argument("execute_chain: empty seed set");
  if (cap == 0) throw std::invalid_argument("execute_chain: cap must be >= 1");
  for (EntityId seed : seeds) {
    if (!graph.valid(seed)) {
      throw InvalidIdError("execute_chain: seed id out of range: " + std::to_string(seed.value));
    }
  }
  for (const ChainStep& step : chain.steps()) {
    if (!graph.valid(step.relation)) {
      throw InvalidIdError("execute_chain: relation id out of range: " +
                           std::to_string(step.relation.value));
    }
  }

  std::vector<EntityId> ordered_seeds = seeds;
  std::sort(ordered_seeds.begin(), ordered_seeds.end());
  ordered_seeds.erase(std::unique(ordered_seeds.begin(), ordered_seeds.end()),
                      ordered_seeds.end());

  CandidateSet result;
  for (EntityId seed : ordered_seeds) {
    if (chain.empty()) {
      result.insert(CandidateItem{seed, chain, seed, {}, 0, false});
      continue;
    }
    // One frontier per level plus, per reached entity, the first (=lowest
    // predecessor id) incoming edge for path reconstruction.
    std::vector<EntityId> frontier{seed};
    std::vector<std::map<EntityId, std::pair<EntityId, Triplet>>> hops;
    bool dead = false;
    for (const ChainStep& step : chain.steps()) {
      std::map<EntityId, std::pair<EntityId, Triplet>> reached;
      for (EntityId e : frontier) {
        for (EntityId nb : graph.neighbors(e, step.relation, step.direction)) {
          if (reached.count(nb)) continue;
          Triplet edge = step.direction == Direction::forward
                             ? Triplet{e, step.relation, nb}
                             : Triplet{nb, step.relation, e};
          reached.emplace(nb, std::make_pair(e, edge));
        }
      }
      if (reached.empty()) {
        dead = true;
        break;
      }
      frontier.clear();
      for (const auto& [nb, via] : reached) frontier.push_back(nb);
      hops.push_back(std::move(reached));
    }
    if (dead) continue;

    std::size_t kept = 0;
    for (EntityId answer : frontier) {  // ascending: map iteration order
      if (kept == cap) break;
      ++kept;
      std::vector<Triplet> edges(chain.length());
      EntityId cursor = answer;
      for (std::size_t level = chain.length(); level-- > 0;) {
        const auto& [prev, edge] = hops[level].at(cursor);
        edges[level] = edge;
        cursor = prev;
      }
      result.insert(CandidateItem{seed, chain, answer, std::move(edges), 0, false});
    }
  }
  return result;
}

namespace {

void enumerate_chains(const KnowledgeGraph& graph, const std::vector<EntityId>& frontier,
                      const std::vector<EntityId>& answers, int max_hops,
                      std::vector<ChainStep>& stack, std::set<LogicalChain>& found) {
  if (static_cast<int>(stack.size()) == max_hops) return;

  // Distinct (relation, direction) steps available anywhere on the frontier.
  std::set<ChainStep> options;
  for (EntityId e : frontier) {
    for (RelationId r : graph.relations_at(e, Direction::forward)) {
      options.insert(ChainStep{r, Direction::forward});
    }
    for (RelationId r : graph.relations_at(e, Direction::backward)) {
      options.insert(ChainStep{r, Direction::backward});
    }
  }

  for (const ChainStep& step : options) {
    std::vector<EntityId> next;
    for (EntityId e : frontier) {
      for (EntityId nb : graph.neighbors(e, step.relation, step.direction)) next.push_back(nb);
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    if (next.empty()) continue;

    stack.push_back(step);
    bool hit = false;
    for (EntityId a : answers) {
      if (std::binary_search(next.begin(), next.end(), a)) {
        hit = true;
        break;
      }
    }
    if (hit) found.insert(LogicalChain(stack));
    enumerate_chains(graph, next, answers, max_hops, stack, found);
    stack.pop_back();
  }
}

}  // namespace

std::vector<MinedChain> mine_chains(const KnowledgeGraph& graph,
                                    const std::vector<TrainingPair>& pairs, int max_hops,
                                    MiningReport* report) {
  if (max_hops < 1 || max_hops > 4) {
    throw std::invalid_argument("mine_chains: max_hops must be in [1, 4]");
  }
  MiningReport local;
  MiningReport& rep = report ? *report : local;
  rep.pairs_total = pairs.size();

  std::map<std::pair<std::string, LogicalChain>, std::uint64_t> counts;
  for (const TrainingPair& pair : pairs) {
    auto seed = graph.find_entity(pair.seed);
    if (!seed) {
      rep.skipped.push_back("seed not in graph: " + pair.seed);
      continue;
    }
    std::vector<EntityId> answers;
    for (const std::string& a : pair.answers) {
      if (auto id = graph.find_entity(a)) answers.push_back(*id);
    }
    std::sort(answers.begin(), answers.end());
    answers.erase(std::unique(answers.begin(), answers.end()), answers.end());
    if (answers.empty()) {
      rep.skipped.push_back("no gold answer in graph for seed: " + pair.seed);
      continue;
    }
    ++rep.pairs_used;

    std::set<LogicalChain> found;
    std::vector<ChainStep> stack;
    enumerate_chains(graph, {*seed}, answers, max_hops, stack, found);
    for (const LogicalChain& chain : found) ++counts[{pair.template_id, chain}];
  }

  std::vector<MinedChain> out;
  out.reserve(counts.size());
  for (const auto& [key, freq] : counts) out.push_back(MinedChain{key.first, key.second, freq});
  return out;
}

const std::vector<ProjectionEntry>* Projection::chains_for(const std::string& template_id) const {
  auto it = entries_.find(template_id);
  if (it == entries_.end()) return nullptr;
  return &it->second;
}

Projection build_projection(const std::vector<MinedChain>& mined) {
  // chain -> per-template frequency, summed in case the input repeats a key.
  std::map<LogicalChain, std::map<std::string, std::uint64_t>> by_chain;
  for (const MinedChain& m : mined) by_chain[m.chain][m.template_id] += m.frequency;

  std::map<std::string, std::vector<ProjectionEntry>> inverted;
  for (const auto& [chain, freqs] : by_chain) {
    const std::string* winner = nullptr;
    std::uint64_t best = 0;
    for (const auto& [tid, freq] : freqs) {  // ascending tid: first max wins ties
      if (!winner || freq > best) {
        winner = &tid;
        best = freq;
      }
    }
    inverted[*winner].push_back(ProjectionEntry{chain, best});
  }
  for (auto& [tid, entries] : inverted) {
    std::stable_sort(entries.begin(), entries.end(),
                     [](const ProjectionEntry& a, const ProjectionEntry& b) {
                       if (a.frequency != b.frequency) return a.frequency > b.frequency;
                       return a.chain < b.chain;
                     });
  }
  return Projection(std::move(inverted));
}

void Projection::serialize(std::ostream& out, const KnowledgeGraph& graph,
                           const std::vector<std::string>& include_empty) const {
  out << "kgqa-projection v1\n";
  std::set<std::string> ids;
  for (const auto& [tid, entries] : entries_) ids.insert(tid);
  for (const std::string& tid : include_empty) ids.insert(tid);
  for (const std::string& tid : ids) {
    out << "template\t" << tid << '\n';
    auto it = entries_.find(tid);
    if (it == entries_.end()) continue;
    for (const ProjectionEntry& entry : it->second) {
      out << "chain\t" << entry.frequency;
      for (const ChainStep& step : entry.chain.steps()) {
        out << '\t' << graph.relation_surface(step.relation) << ':'
            << direction_code(step.direction);
      }
      out << '\n';
    }
  }
}

Projection Projection::parse(std::istream& in, const KnowledgeGraph& graph) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw LoadError("empty projection file", 1);
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "kgqa-projection v1") throw LoadError("unsupported projection header: " + line, 1);

  std::map<std::string, std::vector<ProjectionEntry>> entries;
  std::string current;
  bool have_template = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      auto pos = line.find('\t', start);
      if (pos == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, pos - start));
      start = pos + 1;
    }
    if (fields[0] == "template") {
      if (fields.size() != 2 || fields[1].empty()) {
        throw LoadError("malformed template record", line_no);
      }
      current = fields[1];
      have_template = true;
      entries.try_emplace(current);
    } else if (fields[0] == "chain") {
      if (!have_template) throw LoadError("chain record before any template", line_no);
      if (fields.size() < 2) throw LoadError("malformed chain record", line_no);
      ProjectionEntry entry;
      try {
        entry.frequency = std::stoull(fields[1]);
      } catch (const std::exception&) {
        throw LoadError("malformed chain frequency: " + fields[1], line_no);
      }
      std::vector<ChainStep> steps;
      for (std::size_t i = 2; i < fields.size(); ++i) {
        try {
          LogicalChain one = LogicalChain::parse_key(fields[i], graph);
          if (one.length() != 1) throw LoadError("malformed chain step: " + fields[i], line_no);
          steps.push_back(one.steps()[0]);
        } catch (const LoadError& e) {
          throw LoadError(std::string(e.what()), line_no);
        }
      }
      entry.chain = LogicalChain(std::move(steps));
      entries[current].push_back(std::move(entry));
    } else {
      throw LoadError("unknown record type: " + fields[0], line_no);
    }
  }
  // Drop templates that own no chains; they are serialization-only.
  for (auto it = entries.begin(); it != entries.end();) {
    if (it->second.empty()) {
      it = entries.erase(it);
    } else {
      ++it;
    }
  }
  return Projection(std::move(entries));
}

Projection Projection::parse_file(const std::string& path, const KnowledgeGraph& graph) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open projection file: " + path);
  return parse(in, graph);
}

}  // namespace kgqa
