#pragma once
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "manipdt/env.hpp"
#include "manipdt/planner.hpp"
#include "manipdt/scene.hpp"

// Expert demonstrations along planned subgoal sequences, and the JSONL
// dataset container they are stored in.
namespace traj {

struct Error : std::runtime_error {
  enum class Kind { InfeasibleSegment, BadFile };
  Kind kind;
  Error(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

struct Episode {
  int id = 0;
  std::vector<std::string> plan;               // subgoal labels, one per segment
  std::vector<double> rtg;                     // T+1 return-to-go tokens
  std::vector<std::vector<double>> states;     // T+1 x state_dim
  std::vector<std::vector<double>> goals;      // T+1 x 3, active subgoal target
  std::vector<std::vector<double>> actions;    // T x action_dim
  std::vector<double> rewards;                 // T
  std::vector<std::pair<int, int>> segments;   // per subgoal: (start, len)
  int steps() const { return int(actions.size()); }
};

struct ExpertParams {
  int n = 5;                 // steps per subgoal segment
  double alpha = 1.0;
  double jitter = 0.01;      // gaussian sigma on interior waypoints
  double start_jitter = 0.0; // gaussian sigma on object start xy, per episode
  env::Params env_params;
};

// Drive the plan through the environment: the active arm follows an n-step
// jittered straight line with exact endpoints (jitter halves deterministically
// until every step passes the checker unchanged), inactive arms drift home.
// Throws InfeasibleSegment when even the un-jittered line is rejected.
Episode expert_episode(const scene::Scene& scn, const std::vector<planner::PlanStep>& steps,
                       const ExpertParams& p, uint64_t seed, int id);

struct DatasetHeader {
  int state_dim = 0;
  int action_dim = 0;
  int goal_dim = 3;
  int n = 5;
  double alpha = 1.0;
  uint64_t seed = 0;
  int episodes = 0;
  std::string scene_name;   // basename of the scene file
  std::string scene_hash;   // fnv1a64 hex of the scene file text
  std::string config_hash;  // resolved experiment config hash; empty outside the tool
};

struct Dataset {
  DatasetHeader header;
  std::vector<Episode> episodes;
};

Dataset build_dataset(const scene::Scene& scn, const std::string& scene_name,
                      const std::string& scene_text, const std::vector<planner::PlanStep>& plan,
                      const ExpertParams& p, int episodes, uint64_t seed);

// One JSON object per line: header first, then episodes. Doubles print with
// %.17g so parse(serialize(d)) reproduces the bytes exactly.
std::string serialize_dataset(const Dataset& d);
Dataset parse_dataset(const std::string& text);
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace traj
