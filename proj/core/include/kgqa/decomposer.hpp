#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "kgqa/kg_store.hpp"

namespace kgqa {

class Backend;

// Instruction sent to the decomposition backend.
inline constexpr std::string_view kDecomposeInstruction =
    "The AI assistant can parse the user input to several subquestions:";

// Appended to the input on the single retry after an unusable reply.
inline constexpr std::string_view kDecomposeRetryReminder =
    "Reply with only a JSON array of steps, each an object with fields "
    "\"question\", \"id\", \"dep\", and \"args\" holding \"seed_entities\".";

// One seed entry of a plan step: either a literal entity surface or a
// reference to the answers of an earlier step ("<GENERATED>-k").
struct SeedRef {
  enum class Kind { literal, generated };

  Kind kind = Kind::literal;
  std::string text;       // literal surface (unset for generated refs)
  std::size_t step = 0;   // referenced step id (unset for literals)

  static SeedRef parse(std::string_view raw);
  std::string render() const;

  friend bool operator==(const SeedRef&, const SeedRef&) = default;
};

struct PlanStep {
  std::string question;
  std::size_t id = 0;
  std::vector<long long> deps;  // as parsed; {-1} marks a root step
  std::vector<SeedRef> seeds;

  bool is_root() const { return deps.size() == 1 && deps.front() == -1; }
  // Dependency ids with the root marker stripped.
  std::vector<std::size_t> dependency_ids() const;

  friend bool operator==(const PlanStep&, const PlanStep&) = default;
};

struct Plan {
  std::vector<PlanStep> steps;

  friend bool operator==(const Plan&, const Plan&) = default;
};

// Extracts the outermost JSON array from model text and checks shape
// (array of objects, required fields, field types). Seed lists are read from
// "args"."seed_entities"; bare "seed_entities", "seeds", or "seed" lists are
// accepted as equivalents. Throws PlanParseError.
Plan parse_plan(std::string_view model_text);

// Semantic validation. Throws PlanInvalidError with one of the rule names:
//   zero-steps, duplicate-id, non-consecutive-ids, empty-question,
//   dep-out-of-range, mixed-root-dep, forward-dep, no-root-step,
//   no-literal-seed, empty-seed, dangling-generated-ref
void validate_plan(const Plan& plan);

// Canonical compact JSON: objects with fields question, id, dep, args (the
// last holding seed_entities), in that order. parse_plan inverts it.
std::string render_plan(const Plan& plan);

// Surface-level seed resolution: the union of the step's literal seeds and
// the recorded answers of every referenced step, deduplicated and sorted.
// A referenced step that answered with the empty set contributes nothing,
// so the result may be empty (the step is then unanswerable). Throws
// SchedulingError only when a referenced step has no recorded entry at all.
std::vector<std::string> resolve_seeds(
    const PlanStep& step,
    const std::map<std::size_t, std::vector<std::string>>& prior_answers);

// Replaces every "<GENERATED>-k" occurrence with rendered.at(k).
// Throws SchedulingError on a reference with no rendered text.
std::string substitute_refs(std::string_view question,
                            const std::map<std::size_t, std::string>& rendered);

class Decomposer {
 public:
  explicit Decomposer(std::shared_ptr<Backend> backend);

  // One model call, plus one retry with a reminder when the reply fails to
  // parse or validate. Throws DecompositionFailedError after the retry.
  Plan decompose(const std::string& question) const;

 private:
  std::shared_ptr<Backend> backend_;
};

}  // namespace kgqa
