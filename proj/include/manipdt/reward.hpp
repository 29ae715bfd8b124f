#pragma once
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Dense per-step rewards over subgoal segments and the return-to-go ledger
// that reproduces them at inference time from observed distances only.
namespace reward {

struct Error : std::runtime_error {
  enum class Kind { BlockOverflow, BadInput };
  Kind kind;
  Error(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

// Training labels: within each segment the post-step distances to the active
// subgoal are softmax-weighted (closer steps earn more) and scaled so every
// segment contributes exactly alpha in total.
std::vector<double> training_rewards(const std::vector<double>& dists,
                                     const std::vector<std::pair<int, int>>& segments,
                                     double alpha);
// contiguous segments of fixed length n covering all of dists
std::vector<double> training_rewards_fixed(const std::vector<double>& dists, int n, double alpha);

// alpha per subgoal: the return-to-go the very first token is conditioned on
double initial_rtg(double alpha, int num_subgoals);

// Prefix-difference return-to-go sequence: out[k] = rtg0 - (r_1 + ... + r_k),
// accumulated left to right. out.size() == rewards.size() + 1, out[0] == rtg0.
// The same fold the ledger uses, so training and inference agree bitwise.
std::vector<double> rtg_sequence(double rtg0, const std::vector<double>& rewards);

struct LedgerParams {
  double alpha = 1.0;
  double beta = 0.04;  // penalty when the distance regresses
  int n = 5;           // block length == training segment length
  int h = 20;          // per-subgoal step budget, a multiple of n
};

// Streaming reward/return-to-go bookkeeping for rollouts.
//
// Steps inside one subgoal are grouped into blocks of n. The first step of a
// block gets the per-step share of what the subgoal still owes; an interior
// step repeats the previous reward while the arm keeps approaching, and pays
// a beta penalty when it regresses, in which case the following interior step
// is overridden with the value that would settle the block's remaining debt
// evenly. Overrides do not survive into the next block. A subgoal that uses
// up h steps without advancing overflows.
class RtgLedger {
 public:
  RtgLedger(LedgerParams p, int num_subgoals);

  // R-hat before the next action; exactly rtg0 - (sum of emitted rewards)
  double rtg() const { return rtg0_ - cum_; }
  double cumulative() const { return cum_; }

  // record the post-action distance of step t, returns the reward r_t
  double on_step(double dist);
  // the driver advanced to the next subgoal after the last recorded step
  void advance_subgoal();

  int steps_total() const { return t_; }
  int steps_in_subgoal() const { return t_ - subgoal_start_; }
  int block_index() const { return (t_ - subgoal_start_) / p_.n; }
  bool override_pending() const { return override_pending_; }

 private:
  LedgerParams p_;
  double rtg0_ = 0;
  double cum_ = 0;           // left-fold of every emitted reward
  int t_ = 0;                // steps emitted so far (absolute)
  int subgoal_start_ = 0;    // absolute step count when this subgoal began
  double last_r_ = 0;
  double last_d_ = 0;
  double block_sum_ = 0;     // rewards emitted in the current block
  double subgoal_sum_ = 0;   // rewards emitted in the current subgoal
  bool override_pending_ = false;
  double override_r_ = 0;
};

}  // namespace reward
