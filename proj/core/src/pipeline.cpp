#include "kgqa/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "kgqa/errors.hpp"

namespace kgqa {

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

// "A", "A and B", "A, B, and C".
std::string prose_list(const std::vector<std::string>& parts) {
  if (parts.empty()) return {};
  if (parts.size() == 1) return parts[0];
  if (parts.size() == 2) return parts[0] + " and " + parts[1];
  std::string out;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) out += parts[i] + ", ";
  out += "and " + parts.back();
  return out;
}

std::string format_score(double score) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.4f", score);
  return buffer;
}

std::string replace_all(std::string text, std::string_view needle, const std::string& value) {
  std::size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    text.replace(pos, needle.size(), value);
    pos += value.size();
  }
  return text;
}

}  // namespace

Pipeline::Pipeline(const KnowledgeGraph& graph, std::shared_ptr<const TemplateIndex> templates,
                   Projection projection, std::shared_ptr<Backend> decomposer_backend,
                   std::shared_ptr<const Reasoner> reasoner,
                   std::shared_ptr<Backend> summarizer_backend, PipelineConfig config)
    : graph_(graph),
      templates_(std::move(templates)),
      projection_(std::move(projection)),
      decomposer_(decomposer_backend),
      reasoner_(std::move(reasoner)),
      summarizer_(std::move(summarizer_backend)),
      config_(std::move(config)) {
  if (!templates_) throw std::invalid_argument("Pipeline: null template index");
  if (!reasoner_) throw std::invalid_argument("Pipeline: null reasoner");
  if (config_.dense_budget > 0) {
    dense_ = std::make_unique<DenseTripletIndex>(graph_, templates_->embedder_ptr());
  }
  decomposer_name_ = decomposer_backend ? decomposer_backend->name() : "none";
  reasoner_name_ = reasoner_->name();
  summarizer_name_ = summarizer_ ? summarizer_->name() : "template";
}

StepRecord Pipeline::run_step(const PlanStep& step,
                              const std::map<std::size_t, std::vector<std::string>>& prior,
                              const std::map<std::size_t, std::string>& rendered) const {
  StepRecord rec;
  rec.id = step.id;
  rec.question = step.question;
  rec.substituted = substitute_refs(step.question, rendered);

  std::vector<std::string> literals;
  for (const SeedRef& seed : step.seeds) {
    if (seed.kind == SeedRef::Kind::literal) literals.push_back(normalize_surface(seed.text));
  }
  rec.masked = mask_mentions(step.question, literals);

  std::vector<std::string> resolved = resolve_seeds(step, prior);

  // Decomposers may emit the sub-question as a template pattern, with the
  // seeds carried only in args; render the asked form by filling the slot.
  if (!resolved.empty()) {
    rec.substituted = replace_all(rec.substituted, "[mask]", join(resolved, ", "));
  }

  std::vector<EntityId> seed_ids;
  for (const std::string& surface : resolved) {
    if (auto e = graph_.find_entity(surface)) {
      seed_ids.push_back(*e);
      rec.seed_surfaces.push_back(surface);
    } else {
      rec.unresolved_seeds.push_back(surface);
    }
  }

  if (seed_ids.empty()) {
    rec.unanswerable = true;
    rec.selection.abstained = true;
    rec.selection.diagnostic = "no seeds resolved in the knowledge graph";
    return rec;
  }

  rec.matches = templates_->match(rec.masked, config_.top_k);

  CandidateSet candidates;
  std::set<LogicalChain> seen_chains;
  for (const TemplateMatch& match : rec.matches) {
    const std::vector<ProjectionEntry>* entries = projection_.chains_for(match.template_id);
    if (entries == nullptr) continue;
    std::size_t limit = config_.projection_top_n == 0
                            ? entries->size()
                            : std::min(config_.projection_top_n, entries->size());
    for (std::size_t i = 0; i < limit; ++i) {
      const ProjectionEntry& entry = (*entries)[i];
      if (!seen_chains.insert(entry.chain).second) continue;
      CandidateSet produced =
          execute_chain(graph_, seed_ids, entry.chain, config_.candidate_cap);
      for (CandidateItem item : produced.items()) {
        item.frequency = entry.frequency;
        candidates.insert(std::move(item));
      }
      ChainExecutionRecord exec;
      exec.template_id = match.template_id;
      exec.chain = entry.chain;
      exec.chain_key = entry.chain.key(graph_);
      exec.frequency = entry.frequency;
      exec.produced = produced.size();
      rec.executed.push_back(std::move(exec));
    }
  }

  if (dense_ && config_.dense_budget > 0 &&
      (config_.dense_policy == DensePolicy::always || candidates.empty())) {
    std::vector<Triplet> extra = dense_->supplement(rec.substituted, config_.dense_budget);
    std::size_t before = candidates.size();
    merge_candidates(candidates, dense_candidates(graph_, extra));
    rec.dense_added = candidates.size() - before;
  }

  rec.candidate_count = candidates.size();
  rec.selection = reasoner_->select(graph_, rec.substituted, rec.masked, candidates);
  rec.unanswerable = rec.selection.abstained;
  return rec;
}

Response Pipeline::answer(const std::string& question) const {
  Response response;
  ExecutionLog& log = response.log;
  log.question = question;
  log.decomposer_backend = decomposer_name_;
  log.reasoner_backend = reasoner_name_;
  log.summarizer_backend = summarizer_name_;

  try {
    log.plan = decomposer_.decompose(question);
  } catch (const DecompositionFailedError& e) {
    log.failure = e.what();
    response.narrative = generate_response(log, nullptr);
    return response;
  }

  std::map<std::size_t, std::vector<std::string>> prior;
  std::map<std::size_t, std::string> rendered;
  for (const PlanStep& step : log.plan.steps) {
    auto started = std::chrono::steady_clock::now();
    StepRecord rec = run_step(step, prior, rendered);
    rec.duration_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - started)
                          .count();

    std::vector<std::string> answers = rec.selection.answers;
    prior[step.id] = answers;
    std::sort(answers.begin(), answers.end());
    rendered[step.id] = join(answers, ", ");
    log.steps.push_back(std::move(rec));
  }

  // Terminal steps: those no other step depends on.
  std::set<std::size_t> referenced;
  for (const PlanStep& step : log.plan.steps) {
    for (std::size_t dep : step.dependency_ids()) referenced.insert(dep);
  }
  for (const StepRecord& rec : log.steps) {
    if (referenced.count(rec.id)) continue;
    for (const std::string& answer : rec.selection.answers) {
      if (std::find(log.final_answers.begin(), log.final_answers.end(), answer) ==
          log.final_answers.end()) {
        log.final_answers.push_back(answer);
      }
    }
  }

  response.answers = log.final_answers;
  response.narrative = generate_response(log, summarizer_.get());
  return response;
}

std::string render_log(const ExecutionLog& log) {
  std::ostringstream out;
  out << "Question: " << log.question << "\n";
  if (!log.failure.empty()) {
    out << "Failure: " << log.failure << "\n";
  }
  for (const StepRecord& rec : log.steps) {
    out << "Step " << rec.id << ":\n";
    out << "  Sub-question: " << rec.question << "\n";
    if (rec.substituted != rec.question) out << "  Asked: " << rec.substituted << "\n";
    out << "  Seeds: " << (rec.seed_surfaces.empty() ? "none" : join(rec.seed_surfaces, ", "))
        << "\n";
    if (!rec.unresolved_seeds.empty()) {
      out << "  Unresolved seeds: " << join(rec.unresolved_seeds, ", ") << "\n";
    }
    if (!rec.matches.empty()) {
      out << "  Templates:";
      for (std::size_t i = 0; i < rec.matches.size(); ++i) {
        out << (i == 0 ? " " : ", ") << rec.matches[i].template_id << " ("
            << format_score(rec.matches[i].score) << ")";
      }
      out << "\n";
    }
    for (const ChainExecutionRecord& exec : rec.executed) {
      out << "  Chain: " << exec.template_id << " [" << exec.chain_key
          << "] frequency=" << exec.frequency << " produced=" << exec.produced << "\n";
    }
    if (rec.dense_added > 0) out << "  Dense supplements: " << rec.dense_added << "\n";
    out << "  Candidates: " << rec.candidate_count << "\n";
    if (rec.selection.abstained) {
      out << "  Answers: abstained";
      if (!rec.selection.diagnostic.empty()) out << " (" << rec.selection.diagnostic << ")";
      out << "\n";
    } else {
      out << "  Answers: " << join(rec.selection.answers, ", ") << "\n";
    }
  }
  out << "Final answers: "
      << (log.final_answers.empty() ? "none" : join(log.final_answers, ", ")) << "\n";
  return out.str();
}

std::string template_narrative(const ExecutionLog& log) {
  if (log.final_answers.empty()) return std::string(kInabilityNarrative);

  std::string out;
  bool first = true;
  for (const StepRecord& rec : log.steps) {
    std::string sentence;
    if (rec.selection.abstained || rec.selection.answers.empty()) {
      sentence = "No answer was found for \"" + rec.substituted + "\".";
    } else {
      sentence = "the answer to \"" + rec.substituted + "\" is " +
                 prose_list(rec.selection.answers) + ".";
    }
    if (first) {
      out = std::string(kNarrativePrefix) + ", " + sentence;
      first = false;
    } else {
      sentence[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(sentence[0])));
      out += " " + sentence;
    }
  }
  if (out.empty()) return std::string(kInabilityNarrative);
  return out;
}

std::string generate_response(const ExecutionLog& log, Backend* summarizer) {
  std::string narrative;
  if (summarizer == nullptr) {
    narrative = template_narrative(log);
  } else {
    try {
      narrative = summarizer->complete(std::string(kSummarizeInstruction), render_log(log));
    } catch (const GatewayError&) {
      narrative = template_narrative(log);
    }
  }

  std::vector<std::string> missing;
  for (const std::string& answer : log.final_answers) {
    if (narrative.find(answer) == std::string::npos) missing.push_back(answer);
  }
  if (!missing.empty()) {
    narrative += " Final answers: " + join(log.final_answers, ", ") + ".";
  }
  return narrative;
}

void export_log(const ExecutionLog& log, std::ostream& out) {
  nlohmann::ordered_json meta;
  meta["type"] = "meta";
  meta["question"] = log.question;
  meta["plan"] = render_plan(log.plan);
  meta["backends"] = nlohmann::ordered_json{{"decomposer", log.decomposer_backend},
                                            {"reasoner", log.reasoner_backend},
                                            {"summarizer", log.summarizer_backend}};
  if (!log.failure.empty()) meta["failure"] = log.failure;
  out << meta.dump() << "\n";

  for (const StepRecord& rec : log.steps) {
    nlohmann::ordered_json row;
    row["type"] = "step";
    row["id"] = rec.id;
    row["question"] = rec.question;
    row["substituted"] = rec.substituted;
    row["masked"] = rec.masked;
    row["seeds"] = rec.seed_surfaces;
    row["unresolved_seeds"] = rec.unresolved_seeds;
    nlohmann::ordered_json templates = nlohmann::ordered_json::array();
    for (const TemplateMatch& match : rec.matches) {
      templates.push_back(
          nlohmann::ordered_json{{"id", match.template_id}, {"score", match.score}});
    }
    row["templates"] = std::move(templates);
    nlohmann::ordered_json chains = nlohmann::ordered_json::array();
    for (const ChainExecutionRecord& exec : rec.executed) {
      chains.push_back(nlohmann::ordered_json{{"template", exec.template_id},
                                              {"chain", exec.chain_key},
                                              {"frequency", exec.frequency},
                                              {"produced", exec.produced}});
    }
    row["chains"] = std::move(chains);
    row["dense_added"] = rec.dense_added;
    row["candidates"] = rec.candidate_count;
    row["answers"] = rec.selection.answers;
    row["abstained"] = rec.selection.abstained;
    row["unanswerable"] = rec.unanswerable;
    row["diagnostic"] = rec.selection.diagnostic;
    out << row.dump() << "\n";
  }

  nlohmann::ordered_json final_row;
  final_row["type"] = "final";
  final_row["answers"] = log.final_answers;
  out << final_row.dump() << "\n";
}

}  // namespace kgqa
