// Operator entry point: ingest a knowledge graph, mine the template
// projection, answer single questions, and run evaluations and sweeps.

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kgqa/chain_engine.hpp"
#include "kgqa/decomposer.hpp"
#include "kgqa/errors.hpp"
#include "kgqa/evalkit.hpp"
#include "kgqa/kg_store.hpp"
#include "kgqa/model_gateway.hpp"
#include "kgqa/pipeline.hpp"
#include "kgqa/reasoner.hpp"
#include "kgqa/template_index.hpp"

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raw option values as parsed; config-file entries fill in whatever the
// command line left untouched, so defaults live here.
struct RawOptions {
  std::string config_path;
  std::string kg;
  std::string templates;
  std::string projection;
  std::string qa;
  std::string qa_format = "metaqa";
  std::string kb_format = "pipe";
  std::string mode;  // empty: resolved per reasoner backend kind
  std::string dense_policy = "always";
  std::string backend_decomposer = "gateway";
  std::string backend_reasoner = "gateway";
  std::string backend_summarizer = "template";
  std::string gateway_url;
  std::string log_path;
  std::string record_path;
  std::uint64_t top_k = 3;
  std::uint64_t max_hops = 3;
  std::uint64_t candidate_cap = 512;
  std::uint64_t token_budget = 3000;
  std::uint64_t dense_budget = 0;
  std::uint64_t projection_top_n = 0;
  std::uint64_t workers = 1;
  double threshold = 0.0;
  bool hits_any = false;
};

struct RunConfig {
  std::string kg;
  std::string templates;
  std::string projection;
  std::string qa;
  kgqa::QaFormat qa_format = kgqa::QaFormat::metaqa;
  kgqa::KbFormat kb_format;
  std::optional<kgqa::ContextMode> mode;
  kgqa::DensePolicy dense_policy = kgqa::DensePolicy::always;
  std::string backend_decomposer;
  std::string backend_reasoner;
  std::string backend_summarizer;
  std::string gateway_url;
  std::string log_path;
  std::string record_path;
  std::size_t top_k = 3;
  std::size_t max_hops = 3;
  std::size_t candidate_cap = 512;
  std::size_t token_budget = 3000;
  std::size_t dense_budget = 0;
  std::size_t projection_top_n = 0;
  std::size_t workers = 1;
  std::optional<double> threshold;
  bool hits_any = false;
};

std::uint64_t parse_count(const std::string& value, const std::string& key) {
  try {
    std::size_t pos = 0;
    unsigned long long n = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return n;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' expects a non-negative integer, got '" + value +
                     "'");
  }
}

double parse_real(const std::string& value, const std::string& key) {
  try {
    std::size_t pos = 0;
    double d = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return d;
  } catch (const std::exception&) {
    throw UsageError("config key '" + key + "' expects a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw UsageError("config key '" + key + "' expects true or false, got '" + value + "'");
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::map<std::string, std::string> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string trimmed = kgqa::normalize_surface(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    std::size_t eq = trimmed.find('=');
    if (eq == std::string::npos) throw kgqa::LoadError("expected key=value", line_no);
    std::string key = kgqa::normalize_surface(trimmed.substr(0, eq));
    std::string value = kgqa::normalize_surface(trimmed.substr(eq + 1));
    if (key.empty()) throw kgqa::LoadError("empty config key", line_no);
    if (!entries.emplace(key, value).second) {
      throw kgqa::LoadError("duplicate config key: " + key, line_no);
    }
  }
  return entries;
}

// One registered option: its config-file key, the CLI11 handle (to tell
// whether the command line already set it), and a setter for the raw field.
struct ConfigBinding {
  CLI::Option* option = nullptr;
  std::function<void(const std::string&)> apply;
};

kgqa::DensePolicy parse_dense_policy(const std::string& name) {
  if (name == "always") return kgqa::DensePolicy::always;
  if (name == "on-empty" || name == "on_empty") return kgqa::DensePolicy::on_empty;
  throw UsageError("dense-policy must be 'always' or 'on-empty', got '" + name + "'");
}

kgqa::KbFormat parse_kb_format(const std::string& name) {
  kgqa::KbFormat format;
  if (name == "pipe") {
    format.delimiter = '|';
  } else if (name == "tab") {
    format.delimiter = '\t';
  } else {
    throw UsageError("kb-format must be 'pipe' or 'tab', got '" + name + "'");
  }
  return format;
}

RunConfig finalize_config(const RawOptions& raw, bool threshold_given) {
  RunConfig rc;
  rc.kg = raw.kg;
  rc.templates = raw.templates;
  rc.projection = raw.projection;
  rc.qa = raw.qa;
  try {
    rc.qa_format = kgqa::parse_qa_format(raw.qa_format);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  rc.kb_format = parse_kb_format(raw.kb_format);
  if (!raw.mode.empty()) {
    try {
      rc.mode = kgqa::parse_context_mode(raw.mode);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  rc.dense_policy = parse_dense_policy(raw.dense_policy);
  rc.backend_decomposer = raw.backend_decomposer;
  rc.backend_reasoner = raw.backend_reasoner;
  rc.backend_summarizer = raw.backend_summarizer;
  rc.gateway_url = raw.gateway_url;
  rc.log_path = raw.log_path;
  rc.record_path = raw.record_path;
  rc.top_k = raw.top_k;
  rc.max_hops = raw.max_hops;
  rc.candidate_cap = raw.candidate_cap;
  rc.token_budget = raw.token_budget;
  rc.dense_budget = raw.dense_budget;
  rc.projection_top_n = raw.projection_top_n;
  rc.workers = raw.workers;
  if (threshold_given) rc.threshold = raw.threshold;
  rc.hits_any = raw.hits_any;

  if (rc.top_k == 0) throw UsageError("top-k must be at least 1");
  if (rc.max_hops < 1 || rc.max_hops > 4) throw UsageError("max-hops must be in [1, 4]");
  if (rc.candidate_cap == 0) throw UsageError("candidate-cap must be at least 1");
  if (rc.token_budget == 0) throw UsageError("token-budget must be at least 1");
  if (rc.workers == 0) throw UsageError("workers must be at least 1");
  if (rc.threshold && (*rc.threshold < 0.0 || *rc.threshold > 1.0)) {
    throw UsageError("threshold must be in [0, 1]");
  }
  return rc;
}

kgqa::BackendSpec stage_spec(const std::string& text, const RunConfig& rc) {
  kgqa::BackendSpec spec = kgqa::parse_backend_spec(text);
  if (spec.kind == kgqa::BackendKind::gateway && text.find(':') == std::string::npos &&
      !rc.gateway_url.empty()) {
    spec.endpoint = rc.gateway_url;
  }
  return spec;
}

std::shared_ptr<kgqa::Backend> maybe_record(std::shared_ptr<kgqa::Backend> backend,
                                            const kgqa::BackendSpec& spec, const RunConfig& rc) {
  if (backend && spec.kind == kgqa::BackendKind::gateway && !rc.record_path.empty()) {
    return std::make_shared<kgqa::RecordingBackend>(std::move(backend), rc.record_path);
  }
  return backend;
}

// Owns everything the pipeline borrows; must outlive every Pipeline built on
// top of it.
struct EngineStack {
  kgqa::KnowledgeGraph graph;
  std::shared_ptr<const kgqa::TemplateIndex> index;
  kgqa::Projection projection;
  std::shared_ptr<kgqa::Backend> decomposer;
  std::shared_ptr<const kgqa::Reasoner> reasoner;
  std::shared_ptr<kgqa::Backend> summarizer;
  kgqa::PipelineConfig pipeline_config;
};

EngineStack build_stack(const RunConfig& rc) {
  if (rc.kg.empty()) throw UsageError("this command requires --kg");
  if (rc.templates.empty()) throw UsageError("this command requires --templates");
  if (rc.projection.empty()) throw UsageError("this command requires --projection");

  EngineStack s;
  s.graph = kgqa::KnowledgeGraph::load_file(rc.kg, rc.kb_format);
  s.index = std::make_shared<const kgqa::TemplateIndex>(
      kgqa::TemplateRegistry::load_file(rc.templates), std::make_shared<kgqa::HashedEmbedder>());
  s.projection = kgqa::Projection::parse_file(rc.projection, s.graph);

  kgqa::BackendSpec dec_spec = stage_spec(rc.backend_decomposer, rc);
  s.decomposer = maybe_record(kgqa::make_backend(dec_spec), dec_spec, rc);
  if (!s.decomposer) {
    throw UsageError("backend-decomposer does not accept 'template'");
  }

  kgqa::BackendSpec rea_spec = stage_spec(rc.backend_reasoner, rc);
  if (rea_spec.kind == kgqa::BackendKind::oracle) {
    auto gold = kgqa::ChainOracleReasoner::load_gold_chains(rea_spec.resource, s.graph);
    s.reasoner = std::make_shared<kgqa::ChainOracleReasoner>(s.index->registry(), std::move(gold));
  } else if (rea_spec.kind == kgqa::BackendKind::template_renderer) {
    throw UsageError("backend-reasoner does not accept 'template'");
  } else {
    auto backend = maybe_record(kgqa::make_backend(rea_spec), rea_spec, rc);
    s.reasoner = std::make_shared<kgqa::ModelReasoner>(
        backend, kgqa::resolve_context_mode(rc.mode, rea_spec.kind), rc.token_budget);
  }

  kgqa::BackendSpec sum_spec = stage_spec(rc.backend_summarizer, rc);
  s.summarizer = maybe_record(kgqa::make_backend(sum_spec), sum_spec, rc);

  s.pipeline_config.top_k = rc.top_k;
  s.pipeline_config.candidate_cap = rc.candidate_cap;
  s.pipeline_config.mode = rc.mode;
  s.pipeline_config.token_budget = rc.token_budget;
  s.pipeline_config.dense_budget = rc.dense_budget;
  s.pipeline_config.dense_policy = rc.dense_policy;
  s.pipeline_config.projection_top_n = rc.projection_top_n;
  return s;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  return out;
}

int run_ingest(const RunConfig& rc, const std::string& dump_entities,
               const std::string& dump_relations) {
  if (rc.kg.empty()) throw UsageError("ingest requires --kg");
  kgqa::KnowledgeGraph graph = kgqa::KnowledgeGraph::load_file(rc.kg, rc.kb_format);
  std::cout << "entities: " << graph.entity_count() << "\n"
            << "relations: " << graph.relation_count() << "\n"
            << "triplets: " << graph.triplet_count() << "\n";
  if (!dump_entities.empty()) {
    std::ofstream out = open_output(dump_entities);
    graph.dump_entities(out);
  }
  if (!dump_relations.empty()) {
    std::ofstream out = open_output(dump_relations);
    graph.dump_relations(out);
  }
  return 0;
}

int run_mine(const RunConfig& rc, const std::string& train_path, const std::string& out_path) {
  if (rc.kg.empty()) throw UsageError("mine requires --kg");
  if (rc.templates.empty()) throw UsageError("mine requires --templates");
  if (train_path.empty()) throw UsageError("mine requires --train");
  if (out_path.empty()) throw UsageError("mine requires --out");

  kgqa::KnowledgeGraph graph = kgqa::KnowledgeGraph::load_file(rc.kg, rc.kb_format);
  kgqa::TemplateRegistry registry = kgqa::TemplateRegistry::load_file(rc.templates);
  std::vector<kgqa::QaExample> train = kgqa::load_qa_file(train_path, rc.qa_format);

  // Training questions are assigned to templates by exact masked-pattern
  // match; anything fuzzier would make the projection depend on embedding
  // scores.
  std::vector<kgqa::TrainingPair> pairs;
  pairs.reserve(train.size());
  std::size_t unmatched = 0;
  for (const kgqa::QaExample& ex : train) {
    std::string masked = kgqa::mask_mentions(ex.question, {ex.seed});
    std::optional<std::string> tid = registry.exact_pattern_match(masked);
    if (!tid) {
      ++unmatched;
      std::cerr << "warning: no template matches: " << ex.question << "\n";
      continue;
    }
    pairs.push_back(kgqa::TrainingPair{*tid, ex.seed, ex.answers});
  }

  kgqa::MiningReport report;
  std::vector<kgqa::MinedChain> mined =
      kgqa::mine_chains(graph, pairs, static_cast<int>(rc.max_hops), &report);
  kgqa::Projection projection = kgqa::build_projection(mined);

  std::vector<std::string> all_ids;
  all_ids.reserve(registry.size());
  for (const kgqa::QuestionTemplate& t : registry.templates()) all_ids.push_back(t.id);

  {
    std::ofstream out = open_output(out_path);
    projection.serialize(out, graph, all_ids);
  }

  for (const std::string& message : report.skipped) {
    std::cerr << "warning: skipped pair: " << message << "\n";
  }
  std::size_t chains = 0;
  for (const auto& [tid, entries] : projection.entries()) chains += entries.size();
  for (const std::string& tid : all_ids) {
    const auto* entries = projection.chains_for(tid);
    if (!entries || entries->empty()) {
      std::cerr << "warning: template " << tid << " mined no chains\n";
    }
  }
  std::cout << "pairs: " << train.size() << "\n"
            << "pairs used: " << report.pairs_used << "\n"
            << "pairs skipped: " << report.skipped.size() + unmatched << "\n"
            << "templates: " << all_ids.size() << "\n"
            << "chains: " << chains << "\n";
  return 0;
}

int run_ask(const RunConfig& rc, const std::string& query) {
  EngineStack s = build_stack(rc);
  kgqa::Pipeline pipeline(s.graph, s.index, s.projection, s.decomposer, s.reasoner, s.summarizer,
                          s.pipeline_config);
  kgqa::Response response = pipeline.answer(query);
  std::cout << response.narrative << "\n";
  if (!rc.log_path.empty()) {
    std::ofstream out = open_output(rc.log_path);
    kgqa::export_log(response.log, out);
  }
  return 0;
}

int run_eval(const RunConfig& rc, const std::string& out_path) {
  if (rc.qa.empty()) throw UsageError("eval requires --qa");
  EngineStack s = build_stack(rc);
  kgqa::Pipeline pipeline(s.graph, s.index, s.projection, s.decomposer, s.reasoner, s.summarizer,
                          s.pipeline_config);
  std::vector<kgqa::QaExample> examples = kgqa::load_qa_file(rc.qa, rc.qa_format);

  kgqa::EvalOptions options;
  options.workers = rc.workers;
  options.hits_any = rc.hits_any;
  kgqa::EvalResult result = kgqa::evaluate(pipeline, examples, options);

  if (out_path.empty()) {
    kgqa::write_results(result, std::cout);
  } else {
    std::ofstream out = open_output(out_path);
    kgqa::write_results(result, out);
  }

  char hits[32];
  char f1[32];
  std::snprintf(hits, sizeof(hits), "%.6f", result.hits);
  std::snprintf(f1, sizeof(f1), "%.6f", result.f1);
  std::cerr << "examples: " << result.examples.size() << " failures: " << result.failures
            << " hits@1: " << hits << " macro-f1: " << f1 << "\n";

  if (rc.threshold && result.hits < *rc.threshold) {
    std::cerr << "threshold not met: hits@1 " << hits << " < " << *rc.threshold << "\n";
    return 1;
  }
  return 0;
}

std::vector<std::size_t> parse_k_list(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream in(text);
  std::string piece;
  while (std::getline(in, piece, ',')) {
    std::string trimmed = kgqa::normalize_surface(piece);
    if (trimmed.empty()) continue;
    std::uint64_t k = parse_count(trimmed, "k-list");
    if (k == 0) throw UsageError("k-list entries must be at least 1");
    ks.push_back(static_cast<std::size_t>(k));
  }
  if (ks.empty()) throw UsageError("k-list must name at least one k");
  return ks;
}

int run_sweep(const RunConfig& rc, const std::string& k_list, const std::string& out_path) {
  if (rc.qa.empty()) throw UsageError("sweep requires --qa");
  std::vector<std::size_t> ks = parse_k_list(k_list);
  EngineStack s = build_stack(rc);
  std::vector<kgqa::QaExample> examples = kgqa::load_qa_file(rc.qa, rc.qa_format);

  auto factory = [&s](std::size_t k) {
    kgqa::PipelineConfig config = s.pipeline_config;
    config.top_k = k;
    return std::make_shared<const kgqa::Pipeline>(s.graph, s.index, s.projection, s.decomposer,
                                                  s.reasoner, s.summarizer, config);
  };

  kgqa::EvalOptions options;
  options.workers = rc.workers;
  options.hits_any = rc.hits_any;
  std::vector<kgqa::SweepRow> rows = kgqa::sweep_k(factory, ks, examples, options);

  if (out_path.empty()) {
    kgqa::write_sweep(rows, std::cout);
  } else {
    std::ofstream out = open_output(out_path);
    kgqa::write_sweep(rows, out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knowledge-graph question answering over templated logical chains"};
  app.require_subcommand(1);
  app.fallthrough();

  RawOptions raw;
  std::map<std::string, ConfigBinding> bindings;
  auto bind = [&](const std::string& key, CLI::Option* option,
                  std::function<void(const std::string&)> apply) {
    bindings[key] = ConfigBinding{option, std::move(apply)};
  };

  app.add_option("--config", raw.config_path, "key=value config file; flags take precedence");
  bind("kg", app.add_option("--kg", raw.kg, "knowledge graph file (subject|relation|object)"),
       [&](const std::string& v) { raw.kg = v; });
  bind("templates",
       app.add_option("--templates", raw.templates, "template registry file (id<TAB>pattern)"),
       [&](const std::string& v) { raw.templates = v; });
  bind("projection",
       app.add_option("--projection", raw.projection, "mined template-to-chain projection file"),
       [&](const std::string& v) { raw.projection = v; });
  bind("qa", app.add_option("--qa", raw.qa, "qa dataset for eval and sweep"),
       [&](const std::string& v) { raw.qa = v; });
  bind("qa-format", app.add_option("--qa-format", raw.qa_format, "metaqa or webqsp"),
       [&](const std::string& v) { raw.qa_format = v; });
  bind("kb-format", app.add_option("--kb-format", raw.kb_format, "kb delimiter: pipe or tab"),
       [&](const std::string& v) { raw.kb_format = v; });
  bind("mode", app.add_option("--mode", raw.mode, "context mode: tuple or serialized"),
       [&](const std::string& v) { raw.mode = v; });
  bind("dense-policy",
       app.add_option("--dense-policy", raw.dense_policy,
                      "dense supplement policy: always or on-empty"),
       [&](const std::string& v) { raw.dense_policy = v; });
  bind("backend-decomposer",
       app.add_option("--backend-decomposer", raw.backend_decomposer,
                      "decomposition backend: gateway[:url], mock:file, oracle:file"),
       [&](const std::string& v) { raw.backend_decomposer = v; });
  bind("backend-reasoner",
       app.add_option("--backend-reasoner", raw.backend_reasoner,
                      "reasoning backend: gateway[:url], mock:file, oracle:goldchains"),
       [&](const std::string& v) { raw.backend_reasoner = v; });
  bind("backend-summarizer",
       app.add_option("--backend-summarizer", raw.backend_summarizer,
                      "summarizer backend: template, gateway[:url], mock:file"),
       [&](const std::string& v) { raw.backend_summarizer = v; });
  bind("gateway-url",
       app.add_option("--gateway-url", raw.gateway_url,
                      "endpoint for gateway backends that name none"),
       [&](const std::string& v) { raw.gateway_url = v; });
  bind("log", app.add_option("--log", raw.log_path, "write the execution log here (ask)"),
       [&](const std::string& v) { raw.log_path = v; });
  bind("record",
       app.add_option("--record", raw.record_path,
                      "append live gateway exchanges to this session file"),
       [&](const std::string& v) { raw.record_path = v; });
  bind("top-k", app.add_option("--top-k", raw.top_k, "templates retrieved per sub-question"),
       [&](const std::string& v) { raw.top_k = parse_count(v, "top-k"); });
  bind("max-hops", app.add_option("--max-hops", raw.max_hops, "chain length bound for mining"),
       [&](const std::string& v) { raw.max_hops = parse_count(v, "max-hops"); });
  bind("candidate-cap",
       app.add_option("--candidate-cap", raw.candidate_cap, "per-seed candidate cap"),
       [&](const std::string& v) { raw.candidate_cap = parse_count(v, "candidate-cap"); });
  bind("token-budget",
       app.add_option("--token-budget", raw.token_budget, "reasoning context token budget"),
       [&](const std::string& v) { raw.token_budget = parse_count(v, "token-budget"); });
  bind("dense-budget",
       app.add_option("--dense-budget", raw.dense_budget,
                      "dense-retrieved triplets added per sub-question (0 disables)"),
       [&](const std::string& v) { raw.dense_budget = parse_count(v, "dense-budget"); });
  bind("projection-top-n",
       app.add_option("--projection-top-n", raw.projection_top_n,
                      "chains kept per template by frequency (0 keeps all)"),
       [&](const std::string& v) { raw.projection_top_n = parse_count(v, "projection-top-n"); });
  bind("workers", app.add_option("--workers", raw.workers, "concurrent examples during eval"),
       [&](const std::string& v) { raw.workers = parse_count(v, "workers"); });
  CLI::Option* threshold_option =
      app.add_option("--threshold", raw.threshold, "fail eval when hits@1 falls below this");
  bind("threshold", threshold_option,
       [&](const std::string& v) { raw.threshold = parse_real(v, "threshold"); });
  bind("hits-any", app.add_flag("--hits-any", raw.hits_any, "count any gold prediction as a hit"),
       [&](const std::string& v) { raw.hits_any = parse_bool(v, "hits-any"); });

  CLI::App* ingest = app.add_subcommand("ingest", "load a kb file and print its counts");
  ingest->fallthrough();
  std::string dump_entities;
  std::string dump_relations;
  ingest->add_option("--dump-entities", dump_entities, "write id<TAB>surface entity dump");
  ingest->add_option("--dump-relations", dump_relations, "write id<TAB>surface relation dump");

  CLI::App* mine = app.add_subcommand("mine", "mine the template-to-chain projection");
  mine->fallthrough();
  std::string train_path;
  std::string mine_out;
  mine->add_option("--train", train_path, "training qa dataset");
  mine->add_option("--out", mine_out, "projection output file");

  CLI::App* ask = app.add_subcommand("ask", "answer one question end to end");
  ask->fallthrough();
  std::string query;
  ask->add_option("query", query, "question to answer")->required();

  CLI::App* eval = app.add_subcommand("eval", "evaluate a qa dataset");
  eval->fallthrough();
  std::string eval_out;
  eval->add_option("--out", eval_out, "results file (default: stdout)");

  CLI::App* sweep = app.add_subcommand("sweep", "evaluate across several top-k values");
  sweep->fallthrough();
  std::string k_list;
  std::string sweep_out;
  sweep->add_option("--k-list", k_list, "comma-separated top-k values, e.g. 1,2,3")->required();
  sweep->add_option("--out", sweep_out, "sweep table file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);  // --help and --version exit 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    bool threshold_given = threshold_option->count() > 0;
    if (!raw.config_path.empty()) {
      for (const auto& [key, value] : read_config_file(raw.config_path)) {
        auto it = bindings.find(key);
        if (it == bindings.end()) throw UsageError("unknown config key: " + key);
        if (it->second.option->count() > 0) continue;  // flags win
        it->second.apply(value);
        if (key == "threshold") threshold_given = true;
      }
    }
    RunConfig rc = finalize_config(raw, threshold_given);

    if (app.got_subcommand(ingest)) return run_ingest(rc, dump_entities, dump_relations);
    if (app.got_subcommand(mine)) return run_mine(rc, train_path, mine_out);
    if (app.got_subcommand(ask)) return run_ask(rc, query);
    if (app.got_subcommand(eval)) return run_eval(rc, eval_out);
    if (app.got_subcommand(sweep)) return run_sweep(rc, k_list, sweep_out);
    throw UsageError("no command given");
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
