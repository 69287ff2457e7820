#include "kgqa/evalkit.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "kgqa/errors.hpp"

namespace kgqa {

namespace {

std::set<std::string> normalized_set(const std::vector<std::string>& raw) {
  std::set<std::string> out;
  for (const std::string& s : raw) {
    std::string n = normalize_answer(s);
    if (!n.empty()) out.insert(std::move(n));
  }
  return out;
}

std::vector<std::string> split_answers(const std::string& field, std::size_t line_no) {
  std::vector<std::string> answers;
  std::size_t start = 0;
  while (start <= field.size()) {
    std::size_t bar = field.find('|', start);
    std::string piece = normalize_surface(
        field.substr(start, bar == std::string::npos ? field.size() - start : bar - start));
    if (piece.empty()) throw LoadError("empty answer field", line_no);
    answers.push_back(std::move(piece));
    if (bar == std::string::npos) break;
    start = bar + 1;
  }
  if (answers.empty()) throw LoadError("no gold answers", line_no);
  return answers;
}

QaExample parse_metaqa(const std::string& line, std::size_t line_no) {
  std::size_t tab = line.find('\t');
  if (tab == std::string::npos) throw LoadError("expected question<TAB>answers", line_no);
  std::string question = line.substr(0, tab);
  std::string answers = normalize_surface(line.substr(tab + 1));
  if (answers.empty()) throw LoadError("no gold answers", line_no);

  std::size_t open = question.find('[');
  std::size_t close = question.find(']');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw LoadError("expected exactly one [entity] bracket", line_no);
  }
  if (question.find('[', open + 1) != std::string::npos ||
      question.find(']', close + 1) != std::string::npos) {
    throw LoadError("expected exactly one [entity] bracket", line_no);
  }
  QaExample example;
  example.seed = normalize_surface(question.substr(open + 1, close - open - 1));
  if (example.seed.empty()) throw LoadError("empty seed entity", line_no);
  example.question = normalize_surface(question.substr(0, open) + example.seed +
                                       question.substr(close + 1));
  example.answers = split_answers(answers, line_no);
  return example;
}

QaExample parse_webqsp(const std::string& line, std::size_t line_no) {
  std::size_t tab1 = line.find('\t');
  if (tab1 == std::string::npos) throw LoadError("expected question<TAB>seed<TAB>answers", line_no);
  std::size_t tab2 = line.find('\t', tab1 + 1);
  if (tab2 == std::string::npos) throw LoadError("expected question<TAB>seed<TAB>answers", line_no);
  QaExample example;
  example.question = normalize_surface(line.substr(0, tab1));
  example.seed = normalize_surface(line.substr(tab1 + 1, tab2 - tab1 - 1));
  if (example.question.empty() || example.seed.empty()) {
    throw LoadError("empty question or seed", line_no);
  }
  example.answers = split_answers(normalize_surface(line.substr(tab2 + 1)), line_no);
  return example;
}

}  // namespace

QaFormat parse_qa_format(std::string_view name) {
  if (name == "metaqa") return QaFormat::metaqa;
  if (name == "webqsp") return QaFormat::webqsp_simplified;
  throw std::invalid_argument("unknown qa format: " + std::string(name));
}

std::vector<QaExample> load_qa(std::istream& in, QaFormat format) {
  std::vector<QaExample> examples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string trimmed = normalize_surface(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    examples.push_back(format == QaFormat::metaqa ? parse_metaqa(line, line_no)
                                                  : parse_webqsp(line, line_no));
  }
  return examples;
}

std::vector<QaExample> load_qa_file(const std::string& path, QaFormat format) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open qa file: " + path);
  return load_qa(in, format);
}

double hits_at_1(const std::vector<std::vector<std::string>>& predictions,
                 const std::vector<std::vector<std::string>>& gold, bool any_in_set) {
  if (predictions.size() != gold.size()) {
    throw std::invalid_argument("hits_at_1: prediction/gold length mismatch");
  }
  if (predictions.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    std::set<std::string> gold_set = normalized_set(gold[i]);
    if (any_in_set) {
      for (const std::string& p : predictions[i]) {
        if (gold_set.count(normalize_answer(p))) {
          ++hits;
          break;
        }
      }
      continue;
    }
    if (!predictions[i].empty() && gold_set.count(normalize_answer(predictions[i].front()))) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double f1_score(const std::vector<std::string>& predicted,
                const std::vector<std::string>& gold) {
  std::set<std::string> pred_set = normalized_set(predicted);
  std::set<std::string> gold_set = normalized_set(gold);
  if (pred_set.empty() || gold_set.empty()) return 0.0;
  std::size_t overlap = 0;
  for (const std::string& p : pred_set) {
    if (gold_set.count(p)) ++overlap;
  }
  if (overlap == 0) return 0.0;
  double precision = static_cast<double>(overlap) / static_cast<double>(pred_set.size());
  double recall = static_cast<double>(overlap) / static_cast<double>(gold_set.size());
  return 2.0 * precision * recall / (precision + recall);
}

double macro_f1(const std::vector<std::vector<std::string>>& predictions,
                const std::vector<std::vector<std::string>>& gold) {
  if (predictions.size() != gold.size()) {
    throw std::invalid_argument("macro_f1: prediction/gold length mismatch");
  }
  if (predictions.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    sum += f1_score(predictions[i], gold[i]);
  }
  return sum / static_cast<double>(predictions.size());
}

EvalResult evaluate(const Pipeline& pipeline, const std::vector<QaExample>& examples,
                    const EvalOptions& options) {
  EvalResult result;
  result.examples.resize(examples.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&pipeline, &examples, &result, &next] {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= examples.size()) break;
      ExampleResult& r = result.examples[i];
      r.example = examples[i];
      try {
        Response response = pipeline.answer(examples[i].question);
        r.predictions = response.answers;
        r.log = std::move(response.log);
        for (const StepRecord& rec : r.log.steps) r.candidates += rec.candidate_count;
      } catch (const std::exception& e) {
        r.failed = true;
        r.error = e.what();
      }
    }
  };

  std::size_t threads = std::max<std::size_t>(options.workers, 1);
  threads = std::min(threads, std::max<std::size_t>(examples.size(), 1));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  std::vector<std::vector<std::string>> predictions;
  std::vector<std::vector<std::string>> gold;
  predictions.reserve(examples.size());
  gold.reserve(examples.size());
  for (const ExampleResult& r : result.examples) {
    predictions.push_back(r.predictions);
    gold.push_back(r.example.answers);
    if (r.failed) ++result.failures;
    result.total_candidates += r.candidates;
  }
  result.hits = hits_at_1(predictions, gold, options.hits_any);
  result.f1 = macro_f1(predictions, gold);
  return result;
}

void write_results(const EvalResult& result, std::ostream& out) {
  for (const ExampleResult& r : result.examples) {
    nlohmann::ordered_json row;
    row["type"] = "example";
    row["question"] = r.example.question;
    row["seed"] = r.example.seed;
    row["gold"] = r.example.answers;
    row["predictions"] = r.predictions;
    row["failed"] = r.failed;
    if (r.failed) row["error"] = r.error;
    row["candidates"] = r.candidates;
    nlohmann::ordered_json steps = nlohmann::ordered_json::array();
    for (const StepRecord& rec : r.log.steps) {
      steps.push_back(nlohmann::ordered_json{{"id", rec.id},
                                             {"candidates", rec.candidate_count},
                                             {"answers", rec.selection.answers},
                                             {"abstained", rec.selection.abstained}});
    }
    row["steps"] = std::move(steps);
    out << row.dump() << "\n";
  }

  char hits[32];
  char f1[32];
  std::snprintf(hits, sizeof(hits), "%.6f", result.hits);
  std::snprintf(f1, sizeof(f1), "%.6f", result.f1);
  nlohmann::ordered_json footer;
  footer["type"] = "aggregate";
  footer["examples"] = result.examples.size();
  footer["failures"] = result.failures;
  footer["hits_at_1"] = hits;
  footer["macro_f1"] = f1;
  footer["total_candidates"] = result.total_candidates;
  out << footer.dump() << "\n";
}

std::vector<SweepRow> sweep_k(
    const std::function<std::shared_ptr<const Pipeline>(std::size_t)>& factory,
    const std::vector<std::size_t>& ks, const std::vector<QaExample>& examples,
    const EvalOptions& options) {
  if (!factory) throw std::invalid_argument("sweep_k: null pipeline factory");
  std::vector<SweepRow> rows;
  rows.reserve(ks.size());
  for (std::size_t k : ks) {
    std::shared_ptr<const Pipeline> pipeline = factory(k);
    if (!pipeline) throw std::invalid_argument("sweep_k: factory returned null");
    EvalResult result = evaluate(*pipeline, examples, options);
    rows.push_back(SweepRow{k, result.hits, result.f1, result.total_candidates});
  }
  return rows;
}

void write_sweep(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "k\thits_at_1\tmacro_f1\ttotal_candidates\n";
  for (const SweepRow& row : rows) {
    char hits[32];
    char f1[32];
    std::snprintf(hits, sizeof(hits), "%.6f", row.hits);
    std::snprintf(f1, sizeof(f1), "%.6f", row.f1);
    out << row.k << "\t" << hits << "\t" << f1 << "\t" << row.total_candidates << "\n";
  }
}

}  // namespace kgqa
