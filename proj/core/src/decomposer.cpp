#include "kgqa/decomposer.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <stdexcept>

#include "json.hpp"
#include "kgqa/errors.hpp"
#include "kgqa/model_gateway.hpp"

namespace kgqa {

namespace {

constexpr std::string_view kGeneratedMarker = "<GENERATED>-";

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isdigit(c) != 0; });
}

const nlohmann::json& require_field(const nlohmann::json& obj, const char* key,
                                    std::size_t index) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw PlanParseError("step " + std::to_string(index) + ": missing field \"" +
                             key + "\"",
                         0);
  }
  return *it;
}

}  // namespace

SeedRef SeedRef::parse(std::string_view raw) {
  if (raw.size() > kGeneratedMarker.size() &&
      raw.substr(0, kGeneratedMarker.size()) == kGeneratedMarker &&
      all_digits(raw.substr(kGeneratedMarker.size()))) {
    SeedRef ref;
    ref.kind = Kind::generated;
    ref.step = static_cast<std::size_t>(
        std::stoull(std::string(raw.substr(kGeneratedMarker.size()))));
    return ref;
  }
  SeedRef ref;
  ref.kind = Kind::literal;
  ref.text = std::string(raw);
  return ref;
}

std::string SeedRef::render() const {
  if (kind == Kind::generated) {
    return std::string(kGeneratedMarker) + std::to_string(step);
  }
  return text;
}

std::vector<std::size_t> PlanStep::dependency_ids() const {
  std::vector<std::size_t> out;
  if (is_root()) return out;
  out.reserve(deps.size());
  for (long long d : deps) {
    if (d >= 0) out.push_back(static_cast<std::size_t>(d));
  }
  return out;
}

Plan parse_plan(std::string_view model_text) {
  auto open = model_text.find('[');
  auto close = model_text.rfind(']');
  if (open == std::string_view::npos || close == std::string_view::npos ||
      close < open) {
    throw PlanParseError("no JSON array found in reply", 0);
  }
  std::string_view body = model_text.substr(open, close - open + 1);

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw PlanParseError(e.what(), open + e.byte);
  }
  if (!doc.is_array()) throw PlanParseError("top-level JSON value is not an array", open);

  Plan plan;
  plan.steps.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const nlohmann::json& obj = doc[i];
    if (!obj.is_object()) {
      throw PlanParseError("step " + std::to_string(i) + ": not a JSON object", 0);
    }
    PlanStep step;

    const nlohmann::json& question = require_field(obj, "question", i);
    if (!question.is_string()) {
      throw PlanParseError("step " + std::to_string(i) + ": \"question\" is not a string", 0);
    }
    step.question = question.get<std::string>();

    const nlohmann::json& id = require_field(obj, "id", i);
    if (!id.is_number_integer() || id.get<long long>() < 0) {
      throw PlanParseError("step " + std::to_string(i) + ": \"id\" is not a non-negative integer",
                           0);
    }
    step.id = id.get<std::size_t>();

    const nlohmann::json& dep = require_field(obj, "dep", i);
    if (!dep.is_array() || dep.empty()) {
      throw PlanParseError("step " + std::to_string(i) + ": \"dep\" is not a non-empty array", 0);
    }
    for (const nlohmann::json& d : dep) {
      if (!d.is_number_integer()) {
        throw PlanParseError("step " + std::to_string(i) + ": \"dep\" entry is not an integer", 0);
      }
      step.deps.push_back(d.get<long long>());
    }

    const nlohmann::json* seed = nullptr;
    if (auto args = obj.find("args"); args != obj.end()) {
      if (!args->is_object() || !args->contains("seed_entities")) {
        throw PlanParseError(
            "step " + std::to_string(i) + ": \"args\" has no \"seed_entities\" list", 0);
      }
      seed = &args->at("seed_entities");
    } else {
      for (const char* key : {"seed_entities", "seeds", "seed"}) {
        if (auto it = obj.find(key); it != obj.end()) {
          seed = &*it;
          break;
        }
      }
    }
    if (seed == nullptr) {
      throw PlanParseError("step " + std::to_string(i) + ": missing seed list", 0);
    }
    if (!seed->is_array()) {
      throw PlanParseError("step " + std::to_string(i) + ": seed list is not an array", 0);
    }
    for (const nlohmann::json& s : *seed) {
      if (!s.is_string()) {
        throw PlanParseError("step " + std::to_string(i) + ": seed entry is not a string", 0);
      }
      step.seeds.push_back(SeedRef::parse(s.get<std::string>()));
    }

    plan.steps.push_back(std::move(step));
  }
  return plan;
}

void validate_plan(const Plan& plan) {
  if (plan.steps.empty()) {
    throw PlanInvalidError("zero-steps", "plan has no steps");
  }
  std::set<std::size_t> seen_ids;
  for (const PlanStep& step : plan.steps) {
    if (!seen_ids.insert(step.id).second) {
      throw PlanInvalidError("duplicate-id",
                             "step id " + std::to_string(step.id) + " appears twice");
    }
  }
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const PlanStep& step = plan.steps[i];
    if (step.id != i) {
      throw PlanInvalidError("non-consecutive-ids",
                             "step at position " + std::to_string(i) + " has id " +
                                 std::to_string(step.id) + "; ids must be 0..n-1 in order");
    }
    if (normalize_surface(step.question).empty()) {
      throw PlanInvalidError("empty-question",
                             "step " + std::to_string(step.id) + " has an empty question");
    }
    bool has_root_marker = false;
    bool has_real_dep = false;
    for (long long d : step.deps) {
      if (d == -1) {
        has_root_marker = true;
        continue;
      }
      has_real_dep = true;
      if (d < 0 || static_cast<std::size_t>(d) >= plan.steps.size()) {
        throw PlanInvalidError("dep-out-of-range",
                               "step " + std::to_string(step.id) + " depends on " +
                                   std::to_string(d));
      }
      if (static_cast<std::size_t>(d) >= step.id) {
        throw PlanInvalidError("forward-dep",
                               "step " + std::to_string(step.id) + " depends on step " +
                                   std::to_string(d) + " which does not precede it");
      }
    }
    if (has_root_marker && has_real_dep) {
      throw PlanInvalidError("mixed-root-dep",
                             "step " + std::to_string(step.id) +
                                 " mixes -1 with real dependencies");
    }

    std::set<std::size_t> dep_set;
    for (std::size_t d : step.dependency_ids()) dep_set.insert(d);
    for (const SeedRef& seed : step.seeds) {
      if (seed.kind == SeedRef::Kind::literal) {
        if (normalize_surface(seed.text).empty()) {
          throw PlanInvalidError("empty-seed",
                                 "step " + std::to_string(step.id) + " has an empty seed");
        }
        continue;
      }
      if (!dep_set.count(seed.step)) {
        throw PlanInvalidError("dangling-generated-ref",
                               "step " + std::to_string(step.id) + " references <GENERATED>-" +
                                   std::to_string(seed.step) + " without depending on it");
      }
    }
  }

  bool any_root = false;
  bool any_literal = false;
  for (const PlanStep& step : plan.steps) {
    if (step.is_root()) any_root = true;
    for (const SeedRef& seed : step.seeds) {
      if (seed.kind == SeedRef::Kind::literal) any_literal = true;
    }
  }
  if (!any_root) {
    throw PlanInvalidError("no-root-step", "plan has no step with dep [-1]");
  }
  if (!any_literal) {
    throw PlanInvalidError("no-literal-seed", "plan has no literal seed entity");
  }
}

std::string render_plan(const Plan& plan) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const PlanStep& step : plan.steps) {
    nlohmann::ordered_json obj;
    obj["question"] = step.question;
    obj["id"] = step.id;
    obj["dep"] = step.deps;
    nlohmann::ordered_json seeds = nlohmann::ordered_json::array();
    for (const SeedRef& seed : step.seeds) seeds.push_back(seed.render());
    obj["args"] = nlohmann::ordered_json{{"seed_entities", std::move(seeds)}};
    arr.push_back(std::move(obj));
  }
  return arr.dump();
}

std::vector<std::string> resolve_seeds(
    const PlanStep& step,
    const std::map<std::size_t, std::vector<std::string>>& prior_answers) {
  std::vector<std::string> seeds;
  for (const SeedRef& ref : step.seeds) {
    if (ref.kind == SeedRef::Kind::literal) {
      std::string surface = normalize_surface(ref.text);
      if (!surface.empty()) seeds.push_back(std::move(surface));
      continue;
    }
    auto it = prior_answers.find(ref.step);
    if (it == prior_answers.end()) {
      throw SchedulingError("step " + std::to_string(step.id) + " references step " +
                            std::to_string(ref.step) + " which has no recorded answers");
    }
    for (const std::string& answer : it->second) {
      std::string surface = normalize_surface(answer);
      if (!surface.empty()) seeds.push_back(std::move(surface));
    }
  }
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
  return seeds;
}

std::string substitute_refs(std::string_view question,
                            const std::map<std::size_t, std::string>& rendered) {
  std::string out(question);
  std::size_t pos = 0;
  while ((pos = out.find(kGeneratedMarker, pos)) != std::string::npos) {
    std::size_t end = pos + kGeneratedMarker.size();
    std::size_t digits_begin = end;
    while (end < out.size() && std::isdigit(static_cast<unsigned char>(out[end]))) ++end;
    if (end == digits_begin) {
      pos += kGeneratedMarker.size();
      continue;
    }
    std::size_t step = std::stoull(out.substr(digits_begin, end - digits_begin));
    auto it = rendered.find(step);
    if (it == rendered.end()) {
      throw SchedulingError("no rendered answers for <GENERATED>-" + std::to_string(step));
    }
    out.replace(pos, end - pos, it->second);
    pos += it->second.size();
  }
  return out;
}

Decomposer::Decomposer(std::shared_ptr<Backend> backend) : backend_(std::move(backend)) {
  if (!backend_) throw std::invalid_argument("Decomposer: null backend");
}

Plan Decomposer::decompose(const std::string& question) const {
  std::string reply = backend_->complete(std::string(kDecomposeInstruction), question);
  std::string first_error;
  try {
    Plan plan = parse_plan(reply);
    validate_plan(plan);
    return plan;
  } catch (const PlanParseError& e) {
    first_error = e.what();
  } catch (const PlanInvalidError& e) {
    first_error = e.what();
  }

  std::string retry_input = question + "\n" + std::string(kDecomposeRetryReminder);
  reply = backend_->complete(std::string(kDecomposeInstruction), retry_input);
  try {
    Plan plan = parse_plan(reply);
    validate_plan(plan);
    return plan;
  } catch (const PlanParseError& e) {
    throw DecompositionFailedError("retry failed: " + std::string(e.what()) +
                                   " (first attempt: " + first_error + ")");
  } catch (const PlanInvalidError& e) {
    throw DecompositionFailedError("retry failed: " + std::string(e.what()) +
                                   " (first attempt: " + first_error + ")");
  }
}

}  // namespace kgqa
