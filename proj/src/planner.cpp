#include "manipdt/planner.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "httplib.h"

#include "manipdt/jsonio.hpp"

namespace planner {

Plan plan_optimal(const pddl::GroundTask& task, uint64_t node_limit) {
  if (pddl::holds_goal(task, task.init)) return {};

  struct NodeInfo {
    int parent;
    int action;
  };
  std::vector<pddl::SymbolicState> states;
  std::vector<NodeInfo> info;
  std::unordered_map<pddl::SymbolicState, int, pddl::SymbolicStateHash> seen;

  states.push_back(task.init);
  info.push_back({-1, -1});
  seen.emplace(task.init, 0);

  std::deque<int> queue{0};
  uint64_t expanded = 0;
  while (!queue.empty()) {
    int cur = queue.front();
    queue.pop_front();
    if (++expanded > node_limit)
      throw Error(Error::Kind::SearchLimit,
                  "node limit " + std::to_string(node_limit) + " exceeded");
    pddl::SymbolicState cur_state = states[size_t(cur)];
    for (size_t ai = 0; ai < task.actions.size(); ++ai) {
      const pddl::GroundAction& a = task.actions[ai];
      if (!pddl::applicable(a, cur_state)) continue;
      pddl::SymbolicState nxt = pddl::apply(a, cur_state);
      auto [it, inserted] = seen.emplace(nxt, int(states.size()));
      if (!inserted) continue;
      states.push_back(nxt);
      info.push_back({cur, int(ai)});
      if (pddl::holds_goal(task, nxt)) {
        Plan plan;
        for (int n = int(states.size()) - 1; info[size_t(n)].parent >= 0;
             n = info[size_t(n)].parent)
          plan.actions.push_back(info[size_t(n)].action);
        std::reverse(plan.actions.begin(), plan.actions.end());
        return plan;
      }
      queue.push_back(int(states.size()) - 1);
    }
  }
  throw Error(Error::Kind::Unsolvable, "no plan exists (explored " +
                                           std::to_string(states.size()) + " states)");
}

std::vector<PlanStep> parse_plan_text(const std::string& text) {
  std::vector<PlanStep> steps;
  std::istringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::vector<std::string> toks;
    std::string w;
    while (ls >> w) {
      for (char& c : w) c = char(std::tolower((unsigned char)c));
      toks.push_back(w);
    }
    if (toks.empty()) continue;
    PlanStep st;
    st.verb = toks[0];
    st.args.assign(toks.begin() + 1, toks.end());
    if (st.verb == "pick") {
      if (st.args.size() != 2)
        throw Error(Error::Kind::BadPlanSyntax,
                    "line " + std::to_string(lineno) + ": PICK takes <robot> <object>");
    } else if (st.verb == "put") {
      if (st.args.size() != 3)
        throw Error(Error::Kind::BadPlanSyntax,
                    "line " + std::to_string(lineno) + ": PUT takes <robot> <object> <destination>");
    } else {
      throw Error(Error::Kind::BadPlanSyntax,
                  "line " + std::to_string(lineno) + ": unknown action '" + toks[0] + "'");
    }
    steps.push_back(st);
  }
  return steps;
}

std::vector<int> resolve_plan(const pddl::GroundTask& task, const std::vector<PlanStep>& steps,
                              const AliasMap& aliases) {
  auto canon = [&](const std::string& n) {
    auto it = aliases.find(n);
    return it == aliases.end() ? n : it->second;
  };
  std::vector<int> ids;
  for (size_t i = 0; i < steps.size(); ++i) {
    std::string key = steps[i].verb;
    for (const std::string& a : steps[i].args) {
      key += ' ';
      key += canon(a);
    }
    auto it = task.action_id.find(key);
    if (it == task.action_id.end())
      throw Error(Error::Kind::UnknownAction,
                  "step " + std::to_string(i + 1) + ": no such grounded action (" + key + ")");
    ids.push_back(it->second);
  }
  return ids;
}

std::string format_plan(const pddl::GroundTask& task, const Plan& plan) {
  std::string out;
  for (int id : plan.actions) {
    const pddl::GroundAction& a = task.actions[size_t(id)];
    std::string verb = task.domain.actions[size_t(a.schema_index)].name;
    for (char& c : verb) c = char(std::toupper((unsigned char)c));
    out += verb;
    for (const std::string& arg : a.args) {
      out += ' ';
      out += arg;
    }
    out += '\n';
  }
  return out;
}

Validation validate_plan(const pddl::GroundTask& task, const std::vector<int>& actions) {
  pddl::SymbolicState s = task.init;
  for (size_t i = 0; i < actions.size(); ++i) {
    const pddl::GroundAction& a = task.actions[size_t(actions[i])];
    for (int p : a.pre_pos)
      if (!s.get(p))
        return {false, int(i + 1),
                "step " + std::to_string(i + 1) + " (" + a.name + "): precondition (" +
                    task.atoms[size_t(p)].str() + ") not satisfied"};
    for (int p : a.pre_neg)
      if (s.get(p))
        return {false, int(i + 1),
                "step " + std::to_string(i + 1) + " (" + a.name + "): negated precondition (" +
                    task.atoms[size_t(p)].str() + ") violated"};
    s = pddl::apply(a, s);
  }
  for (int g : task.goal)
    if (!s.get(g))
      return {false, int(actions.size() + 1),
              "goal atom (" + task.atoms[size_t(g)].str() + ") not satisfied at plan end"};
  return {true, 0, ""};
}

Validation validate_plan_text(const pddl::GroundTask& task, const std::string& text,
                              const AliasMap& aliases) {
  try {
    std::vector<PlanStep> steps = parse_plan_text(text);
    std::vector<int> ids = resolve_plan(task, steps, aliases);
    return validate_plan(task, ids);
  } catch (const Error& e) {
    return {false, 0, e.what()};
  }
}

HttpEndpoint::HttpEndpoint(std::string host_, int port_, std::string path_)
    : host(std::move(host_)), port(port_), path(std::move(path_)) {}

std::string HttpEndpoint::complete(const std::string& prompt) {
  httplib::Client client(host, port);
  client.set_read_timeout(60, 0);
  nlohmann::json body{{"prompt", prompt}};
  auto res = client.Post(path, body.dump(), "application/json");
  if (!res)
    throw Error(Error::Kind::EndpointError, "planner endpoint unreachable: " + host + ":" +
                                                std::to_string(port));
  if (res->status != 200)
    throw Error(Error::Kind::EndpointError,
                "planner endpoint returned status " + std::to_string(res->status));
  nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("text") || !reply["text"].is_string())
    throw Error(Error::Kind::EndpointError, "planner endpoint reply is not {\"text\": ...}");
  return reply["text"].get<std::string>();
}

MockEndpoint MockEndpoint::from_file(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(jsonio::read_file(path), nullptr, false);
  if (j.is_discarded() || !j.contains("replies") || !j["replies"].is_array())
    throw Error(Error::Kind::EndpointError, "transcript file must contain {\"replies\": [...]}: " + path);
  MockEndpoint m;
  for (const auto& r : j["replies"]) {
    if (!r.is_string())
      throw Error(Error::Kind::EndpointError, "transcript replies must be strings: " + path);
    m.replies.push_back(r.get<std::string>());
  }
  return m;
}

std::string MockEndpoint::complete(const std::string& prompt) {
  prompts_seen.push_back(prompt);
  if (cursor >= replies.size())
    throw Error(Error::Kind::EndpointError,
                "transcript exhausted after " + std::to_string(replies.size()) + " replies");
  return replies[cursor++];
}

std::string build_prompt(const std::string& context, const std::string& domain_text,
                         const std::string& problem_text, const std::string& instruction,
                         const std::vector<std::string>& feedback) {
  std::string p;
  if (!context.empty()) {
    p += context;
    if (p.back() != '\n') p += '\n';
    p += '\n';
  }
  p += domain_text;
  if (p.back() != '\n') p += '\n';
  p += '\n';
  p += problem_text;
  if (p.back() != '\n') p += '\n';
  p += '\n';
  p += instruction;
  p += '\n';
  for (const std::string& f : feedback) {
    p += "\nYour previous plan was invalid: ";
    p += f;
    p += '\n';
  }
  return p;
}

ReplanOutcome llm_plan(const pddl::GroundTask& task, PlannerEndpoint& endpoint,
                       const std::string& context, const std::string& domain_text,
                       const std::string& problem_text, const AliasMap& aliases, int max_attempts,
                       const std::string& instruction) {
  ReplanOutcome out;
  std::vector<std::string> feedback;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    std::string prompt = build_prompt(context, domain_text, problem_text, instruction, feedback);
    std::string reply = endpoint.complete(prompt);
    out.attempts_used = attempt;
    Validation v = validate_plan_text(task, reply, aliases);
    if (v.valid) {
      out.valid = true;
      out.plan = resolve_plan(task, parse_plan_text(reply), aliases);
      out.final_reason.clear();
      return out;
    }
    out.final_reason = v.reason;
    feedback.push_back(v.reason);
  }
  return out;
}

Report planner_report(const std::vector<ReplanOutcome>& outcomes) {
  Report r;
  r.sessions = int(outcomes.size());
  int replans = 0;
  for (const ReplanOutcome& o : outcomes) {
    if (o.valid) {
      ++r.valid;
      replans += o.attempts_used - 1;
    }
  }
  r.accuracy = r.sessions ? double(r.valid) / double(r.sessions) : 0.0;
  r.avg_replans = r.valid ? double(replans) / double(r.valid) : 0.0;
  return r;
}

}  // namespace planner
