#include "kgqa/reasoner.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <stdexcept>

#include "json.hpp"
#include "kgqa/errors.hpp"
#include "kgqa/model_gateway.hpp"

namespace kgqa {

namespace {

std::string lowercase(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view strip_bullet(std::string_view line) {
  if (line.size() >= 2 && (line[0] == '-' || line[0] == '*') && line[1] == ' ') {
    return line.substr(2);
  }
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) {
    std::size_t rest = i + 1;
    if (rest < line.size() && line[rest] == ' ') return line.substr(rest + 1);
  }
  return line;
}

std::vector<std::string> surfaces_for(const KnowledgeGraph& graph,
                                      const std::vector<EntityId>& ids) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (EntityId id : ids) out.push_back(graph.entity_surface(id));
  return out;
}

}  // namespace

std::string_view context_mode_name(ContextMode mode) {
  return mode == ContextMode::tuple_explained ? "tuple" : "serialized";
}

ContextMode parse_context_mode(std::string_view name) {
  if (name == "tuple") return ContextMode::tuple_explained;
  if (name == "serialized") return ContextMode::serialized_text;
  throw std::invalid_argument("unknown context mode: " + std::string(name));
}

ContextMode resolve_context_mode(std::optional<ContextMode> configured,
                                 BackendKind reasoner_kind) {
  if (configured) return *configured;
  return reasoner_kind == BackendKind::gateway ? ContextMode::tuple_explained
                                               : ContextMode::serialized_text;
}

std::size_t count_tokens(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      in_token = false;
      continue;
    }
    if (!in_token) ++count;
    in_token = true;
  }
  return count;
}

std::string candidate_line(const KnowledgeGraph& graph, const CandidateItem& item,
                           ContextMode mode) {
  if (mode == ContextMode::serialized_text) {
    if (item.edges.empty()) return graph.entity_surface(item.seed) + ".";
    std::string out;
    for (std::size_t i = 0; i < item.edges.size(); ++i) {
      if (i > 0) out += ". ";
      out += graph.serialize_triplet(item.edges[i]);
    }
    out += ".";
    return out;
  }

  std::string relpath;
  if (!item.chain.empty()) {
    for (std::size_t i = 0; i < item.chain.steps().size(); ++i) {
      if (i > 0) relpath += "/";
      if (item.chain.steps()[i].direction == Direction::backward) relpath += "~";
      relpath += graph.relation_surface(item.chain.steps()[i].relation);
    }
  } else if (!item.edges.empty()) {
    for (std::size_t i = 0; i < item.edges.size(); ++i) {
      if (i > 0) relpath += "/";
      relpath += graph.relation_surface(item.edges[i].relation);
    }
  } else {
    relpath = "-";
  }
  return "(" + graph.entity_surface(item.seed) + ", " + relpath + ", " +
         graph.entity_surface(item.answer) + ")";
}

ReasoningContext build_context(const KnowledgeGraph& graph, const CandidateSet& candidates,
                               ContextMode mode, std::size_t token_budget) {
  ReasoningContext ctx;
  ctx.mode = mode;
  ctx.token_budget = token_budget;
  if (candidates.empty()) {
    ctx.text = std::string(kNoFactsLine);
    return ctx;
  }

  std::vector<CandidateItem> order = candidates.items();
  std::sort(order.begin(), order.end(), [](const CandidateItem& a, const CandidateItem& b) {
    if (a.frequency != b.frequency) return a.frequency > b.frequency;
    if (a.answer != b.answer) return a.answer < b.answer;
    if (a.seed != b.seed) return a.seed < b.seed;
    if (a.chain != b.chain) return a.chain < b.chain;
    return a.edges < b.edges;
  });

  std::vector<std::string> parts;
  std::size_t used = 0;
  if (mode == ContextMode::tuple_explained) {
    parts.emplace_back(kTuplePreamble);
    used += count_tokens(kTuplePreamble);
  }
  for (const CandidateItem& item : order) {
    std::string line = candidate_line(graph, item, mode);
    std::size_t cost = count_tokens(line);
    if (used + cost > token_budget) break;
    used += cost;
    ctx.lines.push_back(line);
    parts.push_back(std::move(line));
    ctx.kept.insert(item);
  }

  std::string text;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) text += "\n";
    text += parts[i];
  }
  ctx.text = std::move(text);

  // Containment universe: every subject/object surface of the kept items.
  for (const CandidateItem& item : ctx.kept.items()) {
    ctx.answer_universe.push_back(normalize_answer(graph.entity_surface(item.seed)));
    ctx.answer_universe.push_back(normalize_answer(graph.entity_surface(item.answer)));
    for (const Triplet& edge : item.edges) {
      ctx.answer_universe.push_back(normalize_answer(graph.entity_surface(edge.subject)));
      ctx.answer_universe.push_back(normalize_answer(graph.entity_surface(edge.object)));
    }
  }
  std::sort(ctx.answer_universe.begin(), ctx.answer_universe.end());
  ctx.answer_universe.erase(
      std::unique(ctx.answer_universe.begin(), ctx.answer_universe.end()),
      ctx.answer_universe.end());
  return ctx;
}

std::vector<std::string> parse_answer_list(std::string_view reply) {
  std::vector<std::string> out;
  auto push = [&out](std::string_view raw) {
    std::string n = normalize_answer(raw);
    if (n.empty()) return;
    if (std::find(out.begin(), out.end(), n) != out.end()) return;
    out.push_back(std::move(n));
  };

  std::size_t open = reply.find('[');
  std::size_t close = reply.rfind(']');
  if (open != std::string_view::npos && close != std::string_view::npos && close > open) {
    nlohmann::json doc =
        nlohmann::json::parse(reply.substr(open, close - open + 1), nullptr, false);
    if (!doc.is_discarded() && doc.is_array() &&
        std::all_of(doc.begin(), doc.end(),
                    [](const nlohmann::json& v) { return v.is_string(); })) {
      for (const nlohmann::json& v : doc) push(v.get<std::string>());
      return out;
    }
  }

  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= reply.size()) {
    std::size_t nl = reply.find('\n', start);
    std::string_view raw =
        reply.substr(start, nl == std::string_view::npos ? reply.size() - start : nl - start);
    std::string trimmed = normalize_surface(raw);
    if (!trimmed.empty()) lines.push_back(std::string(strip_bullet(trimmed)));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }

  if (lines.size() == 1 && lines[0].find(", ") != std::string::npos) {
    std::string_view rest = lines[0];
    while (!rest.empty()) {
      std::size_t comma = rest.find(", ");
      if (comma == std::string_view::npos) {
        push(rest);
        break;
      }
      push(rest.substr(0, comma));
      rest = rest.substr(comma + 2);
    }
    return out;
  }
  for (const std::string& line : lines) push(line);
  return out;
}

bool is_dont_know(std::string_view reply) {
  std::string lowered = lowercase(reply);
  return lowered.find("don't know") != std::string::npos ||
         lowered.find("do not know") != std::string::npos ||
         lowered.find("dont know") != std::string::npos;
}

ModelReasoner::ModelReasoner(std::shared_ptr<Backend> backend, ContextMode mode,
                             std::size_t token_budget)
    : backend_(std::move(backend)), mode_(mode), token_budget_(token_budget) {
  if (!backend_) throw std::invalid_argument("ModelReasoner: null backend");
}

std::string ModelReasoner::name() const {
  return "model(" + backend_->name() + ", " + std::string(context_mode_name(mode_)) + ")";
}

Selection ModelReasoner::select(const KnowledgeGraph& graph, const std::string& question,
                                const std::string& /*masked_question*/,
                                const CandidateSet& candidates) const {
  ReasoningContext ctx = build_context(graph, candidates, mode_, token_budget_);
  if (ctx.kept.empty()) {
    return Selection{{}, true, "no candidates in context"};
  }

  std::string instruction = std::string(kReasonInstruction) + "\n" +
                            std::string(kContextSeparator) + "\n" + ctx.text;

  auto finish = [&ctx](const std::string& reply) -> std::optional<Selection> {
    if (is_dont_know(reply)) return Selection{{}, true, "model declined"};
    std::vector<std::string> kept;
    for (const std::string& answer : parse_answer_list(reply)) {
      if (std::binary_search(ctx.answer_universe.begin(), ctx.answer_universe.end(), answer)) {
        kept.push_back(answer);
      }
    }
    if (kept.empty()) return std::nullopt;
    return Selection{std::move(kept), false, ""};
  };

  std::string reply = backend_->complete(instruction, question);
  if (auto selection = finish(reply)) return *selection;

  std::string retry_input = question + "\n" + std::string(kReasonRetryReminder);
  reply = backend_->complete(instruction, retry_input);
  if (auto selection = finish(reply)) return *selection;
  return Selection{{}, true, "no usable answers after retry"};
}

ChainOracleReasoner::ChainOracleReasoner(const TemplateRegistry& registry,
                                         std::map<std::string, LogicalChain> gold_chains)
    : registry_(registry), gold_chains_(std::move(gold_chains)) {}

std::map<std::string, LogicalChain> ChainOracleReasoner::load_gold_chains(
    const std::string& path, const KnowledgeGraph& graph) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open gold chain map: " + path);
  std::map<std::string, LogicalChain> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string trimmed = normalize_surface(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos) throw LoadError("expected template_id<TAB>chain_key", line_no);
    std::string id = normalize_surface(line.substr(0, tab));
    std::string key = normalize_surface(line.substr(tab + 1));
    if (id.empty() || key.empty()) throw LoadError("empty template id or chain key", line_no);
    if (out.count(id)) throw LoadError("duplicate template id: " + id, line_no);
    out.emplace(std::move(id), LogicalChain::parse_key(key, graph));
  }
  return out;
}

Selection ChainOracleReasoner::select(const KnowledgeGraph& graph,
                                      const std::string& /*question*/,
                                      const std::string& masked_question,
                                      const CandidateSet& candidates) const {
  if (auto exact = registry_.exact_pattern_match(masked_question)) {
    auto it = gold_chains_.find(*exact);
    if (it != gold_chains_.end()) {
      std::vector<EntityId> picked;
      for (const CandidateItem& item : candidates.items()) {
        if (item.chain == it->second) picked.push_back(item.answer);
      }
      std::sort(picked.begin(), picked.end());
      picked.erase(std::unique(picked.begin(), picked.end()), picked.end());
      if (picked.empty()) {
        return Selection{{}, true, "gold chain produced no candidates"};
      }
      return Selection{surfaces_for(graph, picked), false, "template " + *exact};
    }
  }
  std::vector<EntityId> ids = candidates.answers();
  if (ids.empty()) return Selection{{}, true, "no candidates"};
  return Selection{surfaces_for(graph, ids), false, "selected all candidates"};
}

DenseTripletIndex::DenseTripletIndex(const KnowledgeGraph& graph,
                                     std::shared_ptr<const Embedder> embedder)
    : graph_(graph), embedder_(std::move(embedder)) {
  if (!embedder_) throw std::invalid_argument("DenseTripletIndex: null embedder");
}

void DenseTripletIndex::ensure_embeddings() const {
  std::call_once(once_, [this] {
    embeddings_.reserve(graph_.triplets().size());
    for (const Triplet& t : graph_.triplets()) {
      embeddings_.push_back(embedder_->embed(graph_.serialize_triplet(t)));
    }
  });
}

std::vector<Triplet> DenseTripletIndex::supplement(std::string_view question,
                                                   std::size_t budget) const {
  if (budget == 0 || graph_.triplets().empty()) return {};
  ensure_embeddings();

  std::vector<double> q;
  if (embedder_->thread_safe()) {
    q = embedder_->embed(question);
  } else {
    std::lock_guard<std::mutex> lock(embed_mutex_);
    q = embedder_->embed(question);
  }

  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(embeddings_.size());
  for (std::size_t i = 0; i < embeddings_.size(); ++i) {
    scored.emplace_back(cosine_similarity(q, embeddings_[i]), i);
  }
  std::sort(scored.begin(), scored.end(),
            [](const std::pair<double, std::size_t>& a, const std::pair<double, std::size_t>& b) {
              if (a.first != b.first) return a.first > b.first;
              return a.second < b.second;
            });
  if (scored.size() > budget) scored.resize(budget);

  std::vector<Triplet> out;
  out.reserve(scored.size());
  for (const auto& [score, index] : scored) out.push_back(graph_.triplets()[index]);
  return out;
}

std::vector<CandidateItem> dense_candidates(const KnowledgeGraph& graph,
                                            const std::vector<Triplet>& triplets) {
  std::vector<CandidateItem> out;
  out.reserve(triplets.size());
  for (const Triplet& t : triplets) {
    if (!graph.valid(t.subject) || !graph.valid(t.object)) {
      throw InvalidIdError("dense triplet references an unknown entity");
    }
    CandidateItem item;
    item.seed = t.subject;
    item.answer = t.object;
    item.edges = {t};
    item.dense = true;
    out.push_back(std::move(item));
  }
  return out;
}

void merge_candidates(CandidateSet& base, const std::vector<CandidateItem>& extras) {
  for (const CandidateItem& item : extras) base.insert(item);
}

}  // namespace kgqa
