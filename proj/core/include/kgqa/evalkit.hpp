#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "kgqa/pipeline.hpp"

namespace kgqa {

struct QaExample {
  std::string question;  // text with the seed brackets removed
  std::string seed;      // bracketed entity (metaqa) or seed field (webqsp)
  std::vector<std::string> answers;

  friend bool operator==(const QaExample&, const QaExample&) = default;
};

// metaqa: "question with [entity]<TAB>ans1|ans2|..." (exactly one bracket pair).
// webqsp_simplified: "question<TAB>seed<TAB>ans1|ans2|..." (flat preprocessed export).
enum class QaFormat { metaqa, webqsp_simplified };

QaFormat parse_qa_format(std::string_view name);  // "metaqa" | "webqsp"

// Blank lines and '#' comments are skipped. Malformed lines (missing fields,
// empty answers, bracket violations) throw LoadError with the line number.
std::vector<QaExample> load_qa(std::istream& in, QaFormat format);
std::vector<QaExample> load_qa_file(const std::string& path, QaFormat format);

// Strict top-1 by default: a hit means the first prediction is in the gold
// set (after normalize_answer); empty predictions miss. any_in_set scores a
// hit when any prediction is gold. Throws std::invalid_argument on length
// mismatch; empty input scores 0.
double hits_at_1(const std::vector<std::vector<std::string>>& predictions,
                 const std::vector<std::vector<std::string>>& gold,
                 bool any_in_set = false);

// Set precision/recall harmonic mean over normalized answers. Empty
// predictions (or empty gold) score 0.
double f1_score(const std::vector<std::string>& predicted,
                const std::vector<std::string>& gold);

double macro_f1(const std::vector<std::vector<std::string>>& predictions,
                const std::vector<std::vector<std::string>>& gold);

struct EvalOptions {
  std::size_t workers = 1;
  bool hits_any = false;  // any-in-set Hits@1 variant
};

struct ExampleResult {
  QaExample example;
  std::vector<std::string> predictions;
  bool failed = false;
  std::string error;
  std::size_t candidates = 0;  // candidate_count summed over steps
  ExecutionLog log;
};

struct EvalResult {
  std::vector<ExampleResult> examples;
  double hits = 0.0;
  double f1 = 0.0;
  std::size_t failures = 0;
  std::size_t total_candidates = 0;
};

// Runs the pipeline over every example, up to `workers` examples in flight.
// A throwing example is tallied as a failure and scored as a miss.
EvalResult evaluate(const Pipeline& pipeline, const std::vector<QaExample>& examples,
                    const EvalOptions& options = {});

// One JSON record per example plus an aggregate footer record.
void write_results(const EvalResult& result, std::ostream& out);

struct SweepRow {
  std::size_t k = 0;
  double hits = 0.0;
  double f1 = 0.0;
  std::size_t total_candidates = 0;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

// Evaluates once per k with a pipeline built by the factory for that k.
std::vector<SweepRow> sweep_k(
    const std::function<std::shared_ptr<const Pipeline>(std::size_t)>& factory,
    const std::vector<std::size_t>& ks, const std::vector<QaExample>& examples,
    const EvalOptions& options = {});

// Tab-separated table with a header row.
void write_sweep(const std::vector<SweepRow>& rows, std::ostream& out);

}  // namespace kgqa
