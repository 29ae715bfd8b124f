#include "manipdt/reward.hpp"

#include <algorithm>
#include <cmath>

namespace reward {

std::vector<double> training_rewards(const std::vector<double>& dists,
                                     const std::vector<std::pair<int, int>>& segments,
                                     double alpha) {
  std::vector<double> r(dists.size(), 0.0);
  std::vector<char> covered(dists.size(), 0);
  for (const auto& [start, len] : segments) {
    if (start < 0 || len <= 0 || size_t(start) + size_t(len) > dists.size())
      throw Error(Error::Kind::BadInput, "segment out of range");
    double mx = -1e300;
    for (int i = start; i < start + len; ++i) {
      if (covered[size_t(i)])
        throw Error(Error::Kind::BadInput, "segments overlap at step " + std::to_string(i));
      covered[size_t(i)] = 1;
      mx = std::max(mx, -dists[size_t(i)]);
    }
    double denom = 0;
    for (int i = start; i < start + len; ++i) denom += std::exp(-dists[size_t(i)] - mx);
    for (int i = start; i < start + len; ++i)
      r[size_t(i)] = alpha * std::exp(-dists[size_t(i)] - mx) / denom;
  }
  for (size_t i = 0; i < covered.size(); ++i)
    if (!covered[i])
      throw Error(Error::Kind::BadInput, "step " + std::to_string(i) + " not in any segment");
  return r;
}

std::vector<double> training_rewards_fixed(const std::vector<double>& dists, int n, double alpha) {
  if (n <= 0 || dists.size() % size_t(n) != 0)
    throw Error(Error::Kind::BadInput, "distance count must be a positive multiple of n");
  std::vector<std::pair<int, int>> segs;
  for (int s = 0; s < int(dists.size()); s += n) segs.emplace_back(s, n);
  return training_rewards(dists, segs, alpha);
}

double initial_rtg(double alpha, int num_subgoals) {
  if (num_subgoals <= 0) throw Error(Error::Kind::BadInput, "need at least one subgoal");
  return alpha * double(num_subgoals);
}

std::vector<double> rtg_sequence(double rtg0, const std::vector<double>& rewards) {
  std::vector<double> out;
  out.reserve(rewards.size() + 1);
  double cum = 0;
  out.push_back(rtg0 - cum);
  for (double r : rewards) {
    cum += r;
    out.push_back(rtg0 - cum);
  }
  return out;
}

RtgLedger::RtgLedger(LedgerParams p, int num_subgoals) : p_(p) {
  if (p_.n <= 0 || p_.h <= 0 || p_.h % p_.n != 0)
    throw Error(Error::Kind::BadInput, "h must be a positive multiple of n");
  if (p_.alpha <= 0) throw Error(Error::Kind::BadInput, "alpha must be positive");
  rtg0_ = initial_rtg(p_.alpha, num_subgoals);
}

double RtgLedger::on_step(double dist) {
  int s = t_ - subgoal_start_;  // completed steps in this subgoal; this step is s+1
  double r;
  if (s % p_.n == 0) {
    // block start
    int q = s / p_.n;
    if (q >= p_.h / p_.n)
      throw Error(Error::Kind::BlockOverflow,
                  "subgoal exceeded its " + std::to_string(p_.h) + "-step budget");
    override_pending_ = false;  // overrides do not cross block boundaries
    block_sum_ = 0;
    r = q == 0 ? p_.alpha / double(p_.n) : (p_.alpha - subgoal_sum_) / double(p_.n);
  } else if (override_pending_) {
    r = override_r_;
    override_pending_ = false;
  } else if (dist <= last_d_) {
    r = last_r_;
  } else {
    r = last_r_ - p_.beta;
    // steps left in this block after this one; settle the block's remaining
    // debt evenly over them unless this is the block's final step
    int block_end = subgoal_start_ + (s / p_.n + 1) * p_.n;
    int remaining = block_end - (t_ + 1);
    if (remaining > 0) {
      override_r_ = (p_.alpha - (block_sum_ + r)) / double(remaining);
      override_pending_ = true;
    }
  }
  last_r_ = r;
  last_d_ = dist;
  block_sum_ += r;
  subgoal_sum_ += r;
  cum_ += r;
  t_ += 1;
  return r;
}

void RtgLedger::advance_subgoal() {
  subgoal_start_ = t_;
  subgoal_sum_ = 0;
  block_sum_ = 0;
  override_pending_ = false;
}

}  // namespace reward
