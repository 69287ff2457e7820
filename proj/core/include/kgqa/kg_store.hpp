#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kgqa {

// Dense interned handle. Values are assigned in first-seen order and cover
// [0, count) for a loaded graph.
template <class Tag>
struct Id {
  std::uint32_t value = 0;

  constexpr Id() = default;
  constexpr explicit Id(std::uint32_t v) : value(v) {}

  friend constexpr auto operator<=>(Id, Id) = default;
};

struct EntityTag;
struct RelationTag;
using EntityId = Id<EntityTag>;
using RelationId = Id<RelationTag>;

enum class Direction : std::uint8_t { forward, backward };

Direction reversed(Direction d);
char direction_code(Direction d);  // 'f' or 'b'
std::optional<Direction> direction_from_code(char c);

struct Triplet {
  EntityId subject;
  RelationId relation;
  EntityId object;

  friend constexpr auto operator<=>(const Triplet&, const Triplet&) = default;
};

struct KbFormat {
  char delimiter = '|';
};

// Trims surrounding ASCII whitespace; case and interior punctuation are kept.
std::string normalize_surface(std::string_view raw);

// Answer-comparison form: trimmed, with internal whitespace runs collapsed
// to a single space. Case is kept.
std::string normalize_answer(std::string_view raw);

// Immutable triplet store with forward and backward adjacency and a
// bidirectional surface<->id dictionary per namespace (entities, relations).
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  // Reads "subject<delim>relation<delim>object" lines. Blank lines are
  // skipped, duplicate triplets are collapsed. Throws LoadError on a line
  // with the wrong field count or an empty field.
  static KnowledgeGraph load(std::istream& in, const KbFormat& format = {});
  static KnowledgeGraph load_file(const std::string& path, const KbFormat& format = {});

  std::size_t entity_count() const { return entity_surfaces_.size(); }
  std::size_t relation_count() const { return relation_surfaces_.size(); }
  std::size_t triplet_count() const { return triplets_.size(); }

  bool valid(EntityId e) const { return e.value < entity_surfaces_.size(); }
  bool valid(RelationId r) const { return r.value < relation_surfaces_.size(); }

  // Exact match after normalize_surface.
  std::optional<EntityId> find_entity(std::string_view surface) const;
  std::optional<RelationId> find_relation(std::string_view surface) const;

  // Throw InvalidIdError for out-of-range ids.
  const std::string& entity_surface(EntityId e) const;
  const std::string& relation_surface(RelationId r) const;

  // Endpoint set one hop away, ascending by id. forward follows
  // subject->object, backward follows object->subject. Distinct from an
  // empty result, invalid ids throw InvalidIdError.
  std::vector<EntityId> neighbors(EntityId e, RelationId r, Direction dir) const;

  // Relations with at least one edge at e in the given direction, ascending.
  std::vector<RelationId> relations_at(EntityId e, Direction dir) const;

  bool has_triplet(const Triplet& t) const;

  // First-seen order, duplicates collapsed.
  const std::vector<Triplet>& triplets() const { return triplets_; }

  // "<subject> <relation with '_' mapped to ' '> <object>"
  std::string serialize_triplet(const Triplet& t) const;

  // Debug export, one "id<TAB>surface" per line, ascending by id.
  void dump_entities(std::ostream& out) const;
  void dump_relations(std::ostream& out) const;

 private:
  struct AdjacencyRow {
    // (relation, endpoints sorted ascending), sorted by relation.
    std::vector<std::pair<RelationId, std::vector<EntityId>>> by_relation;
  };

  EntityId intern_entity(std::string surface);
  RelationId intern_relation(std::string surface);
  void build_indexes();
  const std::vector<EntityId>* adjacent(EntityId e, RelationId r, Direction dir) const;

  std::vector<std::string> entity_surfaces_;
  std::vector<std::string> relation_surfaces_;
  std::unordered_map<std::string, std::uint32_t> entity_lookup_;
  std::unordered_map<std::string, std::uint32_t> relation_lookup_;
  std::vector<Triplet> triplets_;
  std::vector<AdjacencyRow> forward_;
  std::vector<AdjacencyRow> backward_;
};

}  // namespace kgqa

template <class Tag>
struct std::hash<kgqa::Id<Tag>> {
  std::size_t operator()(kgqa::Id<Tag> id) const noexcept {
    return std::hash<std::uint32_t>{}(id.value);
  }
};

template <>
struct std::hash<kgqa::Triplet> {
  std::size_t operator()(const kgqa::Triplet& t) const noexcept {
    std::uint64_t packed = (std::uint64_t(t.subject.value) << 42) ^
                           (std::uint64_t(t.relation.value) << 21) ^
                           std::uint64_t(t.object.value);
    return std::hash<std::uint64_t>{}(packed);
  }
};
