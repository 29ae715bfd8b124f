#pragma once
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "manipdt/pddl.hpp"

// Optimal planning over grounded STRIPS tasks plus the external-planner
// (HTTP / transcript mock) path with validate-and-replan.
namespace planner {

struct Error : std::runtime_error {
  enum class Kind {
    Unsolvable,
    SearchLimit,
    BadPlanSyntax,
    UnknownAction,
    EndpointError,
    ExhaustedAttempts,
  };
  Kind kind;
  Error(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

struct Plan {
  std::vector<int> actions;  // indices into GroundTask::actions
  int cost() const { return int(actions.size()); }
};

// Breadth-first search over the grounded state space, unit action costs.
// Successors are generated in grounding order, so the returned plan is the
// lexicographically first among the shortest plans. Throws Unsolvable /
// SearchLimit.
Plan plan_optimal(const pddl::GroundTask& task, uint64_t node_limit = 10000000);

// One "PICK r o" / "PUT r o1 o2" line.
struct PlanStep {
  std::string verb;               // lower-cased action name
  std::vector<std::string> args;  // lower-cased
};

// Strict line grammar; throws BadPlanSyntax with the offending line number.
std::vector<PlanStep> parse_plan_text(const std::string& text);

using AliasMap = std::map<std::string, std::string>;

// Map parsed steps onto ground action ids, applying the alias map to every
// name token. Throws UnknownAction naming the first unmatched step.
std::vector<int> resolve_plan(const pddl::GroundTask& task, const std::vector<PlanStep>& steps,
                              const AliasMap& aliases = {});

std::string format_plan(const pddl::GroundTask& task, const Plan& plan);

struct Validation {
  bool valid = false;
  int first_bad_step = 0;  // 1-based; 0 when valid
  std::string reason;      // empty when valid
};

// Symbolic simulation from init; reports the first violated precondition or
// the first unsatisfied goal atom.
Validation validate_plan(const pddl::GroundTask& task, const std::vector<int>& actions);

// Parse + resolve + simulate external plan text; grammar and resolution
// failures come back as invalid outcomes rather than exceptions so the replan
// loop can feed them to the model.
Validation validate_plan_text(const pddl::GroundTask& task, const std::string& text,
                              const AliasMap& aliases = {});

struct PlannerEndpoint {
  virtual std::string complete(const std::string& prompt) = 0;
  virtual ~PlannerEndpoint() = default;
};

// POST {"prompt": ...} -> {"text": ...}
struct HttpEndpoint : PlannerEndpoint {
  std::string host;
  int port;
  std::string path;
  HttpEndpoint(std::string host_, int port_, std::string path_ = "/complete");
  std::string complete(const std::string& prompt) override;
};

// Deterministic stand-in: replies come from a transcript file
// {"replies": ["...", ...]} and are consumed in order.
struct MockEndpoint : PlannerEndpoint {
  std::vector<std::string> replies;
  size_t cursor = 0;
  std::vector<std::string> prompts_seen;
  static MockEndpoint from_file(const std::string& path);
  std::string complete(const std::string& prompt) override;
};

// Prompt assembly order: task context, domain text, problem text, format
// instruction, then any accumulated validator feedback.
std::string build_prompt(const std::string& context, const std::string& domain_text,
                         const std::string& problem_text, const std::string& instruction,
                         const std::vector<std::string>& feedback);

inline const char* kDefaultInstruction =
    "Generate a plan that stacks the items in the given order. Use only lines of the form "
    "PICK <robot> <item> or PUT <robot> <item> <destination>. Do not include any other text.";

struct ReplanOutcome {
  bool valid = false;
  int attempts_used = 0;
  std::vector<int> plan;     // resolved action ids when valid
  std::string final_reason;  // last validation failure when invalid
};

// Query-validate-replan loop, at most max_attempts queries. Each failed
// attempt appends the validator's reason verbatim to the next prompt.
ReplanOutcome llm_plan(const pddl::GroundTask& task, PlannerEndpoint& endpoint,
                       const std::string& context, const std::string& domain_text,
                       const std::string& problem_text, const AliasMap& aliases = {},
                       int max_attempts = 5,
                       const std::string& instruction = kDefaultInstruction);

struct Report {
  int sessions = 0;
  int valid = 0;
  double accuracy = 0.0;     // valid / sessions
  double avg_replans = 0.0;  // mean (attempts_used - 1) over valid sessions
};

Report planner_report(const std::vector<ReplanOutcome>& outcomes);

}  // namespace planner
