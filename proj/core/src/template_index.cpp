#include "kgqa/template_index.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "kgqa/errors.hpp"
#include "kgqa/kg_store.hpp"

namespace kgqa {

namespace {

constexpr std::string_view kMaskToken = "[mask]";

bool is_word_byte(unsigned char c) {
  return std::isalnum(c) || c >= 0x80;
}

std::size_t count_mask(std::string_view text) {
  std::size_t n = 0;
  std::size_t pos = 0;
  while ((pos = text.find(kMaskToken, pos)) != std::string_view::npos) {
    ++n;
    pos += kMaskToken.size();
  }
  return n;
}

}  // namespace

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::size_t i = 0;
  while (i < lowered.size()) {
    if (lowered.compare(i, kMaskToken.size(), kMaskToken) == 0) {
      tokens.emplace_back(kMaskToken);
      i += kMaskToken.size();
      continue;
    }
    if (!is_word_byte(static_cast<unsigned char>(lowered[i]))) {
      ++i;
      continue;
    }
    std::size_t start = i;
    while (i < lowered.size() && is_word_byte(static_cast<unsigned char>(lowered[i])) &&
           lowered.compare(i, kMaskToken.size(), kMaskToken) != 0) {
      ++i;
    }
    tokens.push_back(lowered.substr(start, i - start));
  }
  return tokens;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

HashedEmbedder::HashedEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw std::invalid_argument("HashedEmbedder: dimension must be >= 1");
}

std::vector<double> HashedEmbedder::embed(std::string_view text) const {
  if (normalize_surface(text).empty()) {
    throw std::invalid_argument("embed: empty text");
  }
  std::vector<double> v(dimension_, 0.0);
  std::vector<std::string> tokens = word_tokens(text);
  if (tokens.empty()) tokens.push_back(normalize_surface(text));
  for (const std::string& token : tokens) {
    v[fnv1a64(token) % dimension_] += 1.0;
  }
  return v;
}

std::string HashedEmbedder::name() const {
  return "hashed-tf-" + std::to_string(dimension_);
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

TemplateRegistry TemplateRegistry::load(std::istream& in) {
  TemplateRegistry registry;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string trimmed = normalize_surface(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw LoadError("expected id<TAB>pattern", line_no);
    std::string id = normalize_surface(line.substr(0, tab));
    std::string pattern = normalize_surface(line.substr(tab + 1));
    if (id.empty() || pattern.empty()) throw LoadError("empty template id or pattern", line_no);
    try {
      registry.add(QuestionTemplate{std::move(id), std::move(pattern)});
    } catch (const std::invalid_argument& e) {
      throw LoadError(e.what(), line_no);
    }
  }
  return registry;
}

TemplateRegistry TemplateRegistry::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open template registry: " + path);
  return load(in);
}

void TemplateRegistry::add(QuestionTemplate t) {
  if (find(t.id)) throw std::invalid_argument("duplicate template id: " + t.id);
  if (count_mask(t.pattern) != 1) {
    throw std::invalid_argument("template pattern must contain [mask] exactly once: " + t.id);
  }
  templates_.push_back(std::move(t));
}

const QuestionTemplate* TemplateRegistry::find(std::string_view id) const {
  for (const auto& t : templates_) {
    if (t.id == id) return &t;
  }
  return nullptr;
}

std::optional<std::string> TemplateRegistry::exact_pattern_match(std::string_view masked) const {
  std::string needle = normalize_surface(masked);
  for (const auto& t : templates_) {
    if (t.pattern == needle) return t.id;
  }
  return std::nullopt;
}

TemplateIndex::TemplateIndex(TemplateRegistry registry, std::shared_ptr<const Embedder> embedder)
    : registry_(std::move(registry)), embedder_(std::move(embedder)) {
  if (!embedder_) throw std::invalid_argument("TemplateIndex: null embedder");
  pattern_embeddings_.reserve(registry_.size());
  for (const auto& t : registry_.templates()) {
    pattern_embeddings_.push_back(embedder_->embed(t.pattern));
  }
}

std::vector<double> TemplateIndex::embed(std::string_view text) const {
  if (embedder_->thread_safe()) return embedder_->embed(text);
  std::lock_guard<std::mutex> lock(embed_mutex_);
  return embedder_->embed(text);
}

std::vector<TemplateMatch> TemplateIndex::match(std::string_view subquestion,
                                                std::size_t k) const {
  if (registry_.empty()) throw std::logic_error("match: empty template registry");
  if (k == 0) throw std::invalid_argument("match: k must be >= 1");

  std::vector<double> q = embed(subquestion);
  std::vector<TemplateMatch> scored;
  scored.reserve(registry_.size());
  for (std::size_t i = 0; i < registry_.size(); ++i) {
    scored.push_back(TemplateMatch{registry_.templates()[i].id,
                                   cosine_similarity(q, pattern_embeddings_[i])});
  }
  std::sort(scored.begin(), scored.end(), [](const TemplateMatch& a, const TemplateMatch& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.template_id < b.template_id;
  });
  scored.resize(std::min(k, scored.size()));
  return scored;
}

std::string mask_mentions(std::string_view question, const std::vector<std::string>& mentions) {
  std::string out(question);
  std::vector<std::string> ordered;
  for (const std::string& m : mentions) {
    std::string trimmed = normalize_surface(m);
    if (!trimmed.empty()) ordered.push_back(trimmed);
  }
  std::sort(ordered.begin(), ordered.end(), [](const std::string& a, const std::string& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a < b;
  });
  for (const std::string& mention : ordered) {
    std::size_t pos = 0;
    while ((pos = out.find(mention, pos)) != std::string::npos) {
      out.replace(pos, mention.size(), kMaskToken);
      pos += kMaskToken.size();
    }
  }
  // Generated-answer placeholders mask the same way.
  std::size_t pos = 0;
  const std::string_view marker = "<GENERATED>-";
  while ((pos = out.find(marker, pos)) != std::string::npos) {
    std::size_t end = pos + marker.size();
    std::size_t digits = 0;
    while (end < out.size() && std::isdigit(static_cast<unsigned char>(out[end]))) {
      ++end;
      ++digits;
    }
    if (digits == 0) {
      pos += marker.size();
      continue;
    }
    out.replace(pos, end - pos, kMaskToken);
    pos += kMaskToken.size();
  }
  return out;
}

}  // namespace kgqa
