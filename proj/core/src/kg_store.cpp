#include "kgqa/kg_store.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "kgqa/errors.hpp"

namespace kgqa {

Direction reversed(Direction d) {
  return d == Direction::forward ? Direction::backward : Direction::forward;
}

char direction_code(Direction d) {
  return d == Direction::forward ? 'f' : 'b';
}

std::optional<Direction> direction_from_code(char c) {
  if (c == 'f') return Direction::forward;
  if (c == 'b') return Direction::backward;
  return std::nullopt;
}

std::string normalize_surface(std::string_view raw) {
  const char* ws = " \t\r\n\f\v";
  auto begin = raw.find_first_not_of(ws);
  if (begin == std::string_view::npos) return {};
  auto end = raw.find_last_not_of(ws);
  return std::string(raw.substr(begin, end - begin + 1));
}

std::string normalize_answer(std::string_view raw) {
  std::string trimmed = normalize_surface(raw);
  std::string out;
  out.reserve(trimmed.size());
  bool in_space = false;
  for (char c : trimmed) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out.push_back(' ');
    in_space = false;
    out.push_back(c);
  }
  return out;
}

EntityId KnowledgeGraph::intern_entity(std::string surface) {
  auto it = entity_lookup_.find(surface);
  if (it != entity_lookup_.end()) return EntityId(it->second);
  auto id = static_cast<std::uint32_t>(entity_surfaces_.size());
  entity_lookup_.emplace(surface, id);
  entity_surfaces_.push_back(std::move(surface));
  return EntityId(id);
}

RelationId KnowledgeGraph::intern_relation(std::string surface) {
  auto it = relation_lookup_.find(surface);
  if (it != relation_lookup_.end()) return RelationId(it->second);
  auto id = static_cast<std::uint32_t>(relation_surfaces_.size());
  relation_lookup_.emplace(surface, id);
  relation_surfaces_.push_back(std::move(surface));
  return RelationId(id);
}

KnowledgeGraph KnowledgeGraph::load(std::istream& in, const KbFormat& format) {
  KnowledgeGraph graph;
  std::unordered_set<Triplet> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (normalize_surface(line).empty()) continue;

    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      auto pos = line.find(format.delimiter, start);
      if (pos == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, pos - start));
      start = pos + 1;
    }
    if (fields.size() != 3) {
      throw LoadError("expected 3 fields, got " + std::to_string(fields.size()), line_no);
    }
    std::string s = normalize_surface(fields[0]);
    std::string r = normalize_surface(fields[1]);
    std::string o = normalize_surface(fields[2]);
    if (s.empty() || r.empty() || o.empty()) {
      throw LoadError("empty entity or relation field", line_no);
    }
    Triplet t{graph.intern_entity(std::move(s)), graph.intern_relation(std::move(r)),
              graph.intern_entity(std::move(o))};
    if (seen.insert(t).second) graph.triplets_.push_back(t);
  }
  graph.build_indexes();
  return graph;
}

KnowledgeGraph KnowledgeGraph::load_file(const std::string& path, const KbFormat& format) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open kb file: " + path);
  return load(in, format);
}

void KnowledgeGraph::build_indexes() {
  // relation -> endpoints, per entity; std::map keeps rows sorted by relation.
  std::vector<std::map<RelationId, std::vector<EntityId>>> fwd(entity_surfaces_.size());
  std::vector<std::map<RelationId, std::vector<EntityId>>> bwd(entity_surfaces_.size());
  for (const Triplet& t : triplets_) {
    fwd[t.subject.value][t.relation].push_back(t.object);
    bwd[t.object.value][t.relation].push_back(t.subject);
  }
  auto pack = [](std::vector<std::map<RelationId, std::vector<EntityId>>>& src,
                 std::vector<AdjacencyRow>& dst) {
    dst.resize(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
      for (auto& [rel, ends] : src[i]) {
        std::sort(ends.begin(), ends.end());
        ends.erase(std::unique(ends.begin(), ends.end()), ends.end());
        dst[i].by_relation.emplace_back(rel, std::move(ends));
      }
    }
  };
  pack(fwd, forward_);
  pack(bwd, backward_);
}

std::optional<EntityId> KnowledgeGraph::find_entity(std::string_view surface) const {
  auto it = entity_lookup_.find(normalize_surface(surface));
  if (it == entity_lookup_.end()) return std::nullopt;
  return EntityId(it->second);
}

std::optional<RelationId> KnowledgeGraph::find_relation(std::string_view surface) const {
  auto it = relation_lookup_.find(normalize_surface(surface));
  if (it == relation_lookup_.end()) return std::nullopt;
  return RelationId(it->second);
}

const std::string& KnowledgeGraph::entity_surface(EntityId e) const {
  if (!valid(e)) throw InvalidIdError("entity id out of range: " + std::to_string(e.value));
  return entity_surfaces_[e.value];
}

const std::string& KnowledgeGraph::relation_surface(RelationId r) const {
  if (!valid(r)) throw InvalidIdError("relation id out of range: " + std::to_string(r.value));
  return relation_surfaces_[r.value];
}

const std::vector<EntityId>* KnowledgeGraph::adjacent(EntityId e, RelationId r,
                                                      Direction dir) const {
  const auto& rows = dir == Direction::forward ? forward_ : backward_;
  const auto& row = rows[e.value].by_relation;
  auto it = std::lower_bound(row.begin(), row.end(), r,
                             [](const auto& entry, RelationId key) { return entry.first < key; });
  if (it == row.end() || it->first != r) return nullptr;
  return &it->second;
}

std::vector<EntityId> KnowledgeGraph::neighbors(EntityId e, RelationId r, Direction dir) const {
  if (!valid(e)) throw InvalidIdError("entity id out of range: " + std::to_string(e.value));
  if (!valid(r)) throw InvalidIdError("relation id out of range: " + std::to_string(r.value));
  const auto* ends = adjacent(e, r, dir);
  if (!ends) return {};
  return *ends;
}

std::vector<RelationId> KnowledgeGraph::relations_at(EntityId e, Direction dir) const {
  if (!valid(e)) throw InvalidIdError("entity id out of range: " + std::to_string(e.value));
  const auto& rows = dir == Direction::forward ? forward_ : backward_;
  std::vector<RelationId> out;
  out.reserve(rows[e.value].by_relation.size());
  for (const auto& [rel, ends] : rows[e.value].by_relation) out.push_back(rel);
  return out;
}

bool KnowledgeGraph::has_triplet(const Triplet& t) const {
  if (!valid(t.subject) || !valid(t.relation) || !valid(t.object)) return false;
  const auto* ends = adjacent(t.subject, t.relation, Direction::forward);
  if (!ends) return false;
  return std::binary_search(ends->begin(), ends->end(), t.object);
}

std::string KnowledgeGraph::serialize_triplet(const Triplet& t) const {
  std::string rel = relation_surface(t.relation);
  std::replace(rel.begin(), rel.end(), '_', ' ');
  return entity_surface(t.subject) + " " + rel + " " + entity_surface(t.object);
}

void KnowledgeGraph::dump_entities(std::ostream& out) const {
  for (std::size_t i = 0; i < entity_surfaces_.size(); ++i) {
    out << i << '\t' << entity_surfaces_[i] << '\n';
  }
}

void KnowledgeGraph::dump_relations(std::ostream& out) const {
  for (std::size_t i = 0; i < relation_surfaces_.size(); ++i) {
    out << i << '\t' << relation_surfaces_[i] << '\n';
  }
}

}  // namespace kgqa
