#pragma once
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "manipdt/env.hpp"
#include "manipdt/nn.hpp"
#include "manipdt/planner.hpp"
#include "manipdt/reward.hpp"
#include "manipdt/rng.hpp"
#include "manipdt/scene.hpp"
#include "manipdt/traj.hpp"

// Goal-conditioned decision transformer: a causal transformer over interleaved
// (return-to-go, state, goal, action) tokens that predicts the next action at
// each goal token, plus the offline trainer and the closed-loop rollout driver
// that feeds it return-to-go values from the streaming ledger.
namespace gcdt {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ModelConfig {
  int state_dim = 31;
  int action_dim = 6;
  int goal_dim = 3;
  int d_model = 64;
  int n_layers = 3;
  int n_heads = 2;
  int context = 20;        // longest window of steps the model attends over
  int max_timestep = 512;  // timestep embedding table size; later steps clamp
  double dropout = 0.1;
  double action_scale = 0.08;  // tanh head bound; matches the checker's step cap
  bool use_goal = true;        // false zeroes every goal token (ablation)
};

std::string config_json(const ModelConfig& c);
ModelConfig parse_config_json(const std::string& text);

// A slice of history the model conditions on: steps lo..tau of an episode.
// `actions` holds the past actions only, so it is one entry shorter.
struct Window {
  std::vector<double> rtg;
  std::vector<std::vector<double>> states;
  std::vector<std::vector<double>> goals;
  std::vector<std::vector<double>> actions;
  std::vector<int> timesteps;
  int steps() const { return int(rtg.size()); }
};

Window make_window(const traj::Episode& ep, int tau, int context, int max_timestep);

template <typename T>
class Model {
 public:
  Model() = default;
  Model(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& cfg() const { return cfg_; }
  std::vector<nn::Mat<T>>& params() { return params_; }
  const std::vector<nn::Mat<T>>& params() const { return params_; }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<bool>& no_decay() const { return no_decay_; }

  // register every parameter on a tape, in declaration order
  std::vector<int> register_params(nn::Tape<T>& t) const;
  // build the forward graph over one window; returns the steps x action_dim
  // prediction node (one row per goal token). A non-null rng enables dropout.
  int forward(nn::Tape<T>& t, const std::vector<int>& pids, const Window& w,
              rng::Rng* drop_rng) const;
  // eval-mode forward on a throwaway tape
  nn::Mat<T> predict(const Window& w) const;

  // extra ("key", string value) pairs land in the checkpoint metadata JSON
  // after the model config; load ignores keys it does not know.
  void save(const std::string& path,
            const std::vector<std::pair<std::string, std::string>>& extra = {}) const;
  static Model load(const std::string& path);

 private:
  ModelConfig cfg_;
  std::vector<nn::Mat<T>> params_;
  std::vector<std::string> names_;
  std::vector<bool> no_decay_;
};

struct TrainConfig {
  int steps = 600;
  int batch = 32;
  double lr = 1e-4;
  double weight_decay = 1e-2;
  double grad_clip = 1.0;  // global-norm clip; 0 disables
  uint64_t seed = 0;
};

struct TrainStats {
  std::vector<double> losses;  // batch-mean loss per optimizer step
};

std::vector<const traj::Episode*> episode_ptrs(const traj::Dataset& d);

// Behavior cloning over uniformly sampled (episode, step) windows. Every call
// starts a fresh optimizer, so calling it again on new data is the
// fine-tuning path.
TrainStats train(Model<float>& model, const std::vector<const traj::Episode*>& episodes,
                 const TrainConfig& tc);

struct RolloutParams {
  int n = 5;   // completion gate: a subgoal may not finish before n steps
  int h = 20;  // per-subgoal step budget; exceeding it fails the episode
  double alpha = 1.0;
  double beta = 0.04;
  env::Params env_params;
};

struct SubgoalOutcome {
  std::string label;
  bool success = false;
  int steps = 0;
};

struct TraceStep {
  int t = 0;
  int subgoal = 0;
  double rtg = 0;
  std::vector<double> action;
  double dist = 0;
  bool done = false;
};

struct RolloutResult {
  std::vector<SubgoalOutcome> subgoals;  // one per plan step, in order
  int total_steps = 0;
  bool episode_success = false;
  double subgoal_rate = 0;  // successes / plan length
};

// Closed-loop execution of a plan: the ledger supplies the return-to-go
// token, the model proposes arm displacements, the environment applies them.
// A subgoal completes once its side effect holds, the arm is on target, and
// at least n steps were spent on it; h steps without completing ends the
// episode as a failure.
RolloutResult rollout(const Model<float>& model, env::Env env,
                      const std::vector<planner::PlanStep>& plan, const RolloutParams& rp,
                      std::vector<TraceStep>* trace = nullptr);

struct EvalParams {
  int episodes = 20;
  uint64_t seed = 0;
  double start_jitter = 0.01;    // xy sigma on object start positions
  std::vector<int> moved_items;  // objects additionally displaced by move_dist
  double move_dist = 0.06;
  RolloutParams rp;
};

struct EvalReport {
  double subgoal_success = 0;  // mean subgoal rate across episodes
  double episode_success = 0;
  double mean_length = 0;
  std::vector<RolloutResult> runs;
};

// Seeded evaluation distribution: each episode perturbs the object start
// positions (and displaces `moved_items` by move_dist in a seeded direction),
// then runs one rollout.
EvalReport evaluate(const Model<float>& model, const scene::Scene& scn,
                    const std::vector<planner::PlanStep>& plan, const EvalParams& ep);

}  // namespace gcdt
