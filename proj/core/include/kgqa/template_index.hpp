#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kgqa {

struct QuestionTemplate {
  std::string id;
  std::string pattern;  // contains the placeholder "[mask]" exactly once

  friend bool operator==(const QuestionTemplate&, const QuestionTemplate&) = default;
};

// Pluggable sentence encoder. embed() must be deterministic for a fixed
// instance and reject empty text.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<double> embed(std::string_view text) const = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::string name() const = 0;
  virtual bool thread_safe() const { return true; }
};

// Lowercased word tokens; "[mask]" is kept as a single regular token. Bytes
// >= 0x80 count as word characters so UTF-8 text tokenizes stably.
std::vector<std::string> word_tokens(std::string_view text);

std::uint64_t fnv1a64(std::string_view data);

// Deterministic hashed term-frequency encoder: each token adds 1.0 at
// fnv1a64(token) % dimension. Texts with no word tokens hash their trimmed
// text as a single token, so any non-empty text embeds to a nonzero vector.
class HashedEmbedder final : public Embedder {
 public:
  explicit HashedEmbedder(std::size_t dimension = 1024);
  std::vector<double> embed(std::string_view text) const override;
  std::size_t dimension() const override { return dimension_; }
  std::string name() const override;

 private:
  std::size_t dimension_;
};

// Exact cosine; 0.0 whenever either vector is all-zero. Throws
// std::invalid_argument on dimension mismatch.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

struct TemplateMatch {
  std::string template_id;
  double score = 0.0;

  friend bool operator==(const TemplateMatch&, const TemplateMatch&) = default;
};

class TemplateRegistry {
 public:
  // "id<TAB>pattern" lines; blank lines and '#' comments are skipped.
  static TemplateRegistry load(std::istream& in);
  static TemplateRegistry load_file(const std::string& path);

  // Throws std::invalid_argument on a duplicate id or a pattern without
  // exactly one "[mask]".
  void add(QuestionTemplate t);

  std::size_t size() const { return templates_.size(); }
  bool empty() const { return templates_.empty(); }
  const std::vector<QuestionTemplate>& templates() const { return templates_; }
  const QuestionTemplate* find(std::string_view id) const;

  // Template whose pattern equals the masked question (surface-normalized).
  std::optional<std::string> exact_pattern_match(std::string_view masked) const;

 private:
  std::vector<QuestionTemplate> templates_;
};

// Registry plus cached pattern embeddings. match() returns the
// min(k, registry size) best templates by cosine, descending, ties broken by
// ascending template id.
class TemplateIndex {
 public:
  TemplateIndex(TemplateRegistry registry, std::shared_ptr<const Embedder> embedder);

  // Throws std::logic_error on an empty registry, std::invalid_argument for
  // k == 0.
  std::vector<TemplateMatch> match(std::string_view subquestion, std::size_t k) const;

  const TemplateRegistry& registry() const { return registry_; }
  const Embedder& embedder() const { return *embedder_; }
  std::shared_ptr<const Embedder> embedder_ptr() const { return embedder_; }

  // Serialized when the embedder is not thread-safe.
  std::vector<double> embed(std::string_view text) const;

 private:
  TemplateRegistry registry_;
  std::shared_ptr<const Embedder> embedder_;
  std::vector<std::vector<double>> pattern_embeddings_;
  mutable std::mutex embed_mutex_;
};

// Replaces every occurrence of each mention (longest first) and every
// "<GENERATED>-k" token with "[mask]".
std::string mask_mentions(std::string_view question, const std::vector<std::string>& mentions);

}  // namespace kgqa
