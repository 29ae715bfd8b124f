#include "manipdt/traj.hpp"

#include <cmath>

#include "json.hpp"

#include "manipdt/jsonio.hpp"
#include "manipdt/reward.hpp"
#include "manipdt/rng.hpp"

namespace traj {

using scene::Vec3;

namespace {

Vec3 retreat_delta(const Vec3& arm, const Vec3& home, double delta_max) {
  Vec3 d = home - arm;
  double len = d.norm();
  return len > delta_max ? d * (delta_max / len) : d;
}

std::vector<double> encode_goal(const Vec3& g) { return {g.x, g.y, g.z}; }

}  // namespace

namespace {

Episode build_episode(const scene::Scene& scn, const std::vector<planner::PlanStep>& steps,
                      const ExpertParams& p, uint64_t stream, double start_jitter, int id) {
  Episode ep;
  ep.id = id;
  rng::Rng rg(stream);
  scene::Scene varied = scn;
  if (start_jitter > 0)
    for (Vec3& pos : varied.object_start) {
      pos.x += rg.gaussian() * start_jitter;
      pos.y += rg.gaussian() * start_jitter;
    }
  env::Env e(varied, p.env_params);
  std::vector<double> dists;

  for (const planner::PlanStep& ps : steps) {
    env::Subgoal sg = e.make_subgoal(ps.verb, ps.args);
    ep.plan.push_back(sg.label);
    Vec3 start = e.state().arms[size_t(sg.robot)];
    Vec3 span = sg.target - start;

    // one jitter draw per interior waypoint; attempts scale it down by halves
    std::vector<Vec3> noise(size_t(p.n), Vec3{0, 0, 0});
    for (int k = 1; k < p.n; ++k) noise[size_t(k - 1)] = {rg.gaussian(), rg.gaussian(), rg.gaussian()};

    const int max_attempts = 24;
    bool committed = false;
    for (int attempt = 0; attempt < max_attempts && !committed; ++attempt) {
      double scale = p.jitter * std::pow(0.5, double(attempt));
      if (attempt == max_attempts - 1) scale = 0.0;  // last resort: the exact line
      env::Env trial = e;
      std::vector<std::vector<Vec3>> deltas;
      bool ok = true;
      for (int k = 1; k <= p.n && ok; ++k) {
        Vec3 w = start + span * (double(k) / double(p.n));
        if (k < p.n) w = w + noise[size_t(k - 1)] * scale;
        std::vector<Vec3> d(size_t(scn.num_robots()));
        for (int rbi = 0; rbi < scn.num_robots(); ++rbi)
          d[size_t(rbi)] = rbi == sg.robot
                               ? w - trial.state().arms[size_t(rbi)]
                               : retreat_delta(trial.state().arms[size_t(rbi)],
                                               scn.robots[size_t(rbi)].home, p.env_params.delta_max);
        ok = trial.feasible(d);
        if (!ok) break;
        env::StepResult res = trial.step(d, sg);
        if (k == p.n) ok = res.done;
        deltas.push_back(std::move(d));
      }
      if (!ok) continue;

      // replay the feasible segment on the real environment, recording tokens
      for (int k = 0; k < p.n; ++k) {
        ep.states.push_back(e.encoded_state());
        ep.goals.push_back(encode_goal(sg.target));
        std::vector<double> a;
        for (const Vec3& dv : deltas[size_t(k)]) {
          a.push_back(dv.x);
          a.push_back(dv.y);
          a.push_back(dv.z);
        }
        ep.actions.push_back(std::move(a));
        env::StepResult res = e.step(deltas[size_t(k)], sg);
        dists.push_back(res.active_dist);
        if (k == p.n - 1 && !res.done)
          throw Error(Error::Kind::InfeasibleSegment,
                      "segment replay diverged on '" + sg.label + "'");
      }
      e.set_pulse(true);
      ep.segments.emplace_back(int(ep.actions.size()) - p.n, p.n);
      committed = true;
    }
    if (!committed)
      throw Error(Error::Kind::InfeasibleSegment,
                  "no feasible " + std::to_string(p.n) + "-step segment for '" + sg.label + "'");
  }

  ep.states.push_back(e.encoded_state());
  ep.goals.push_back(ep.goals.empty() ? encode_goal({0, 0, 0}) : ep.goals.back());
  ep.rewards = reward::training_rewards_fixed(dists, p.n, p.alpha);
  ep.rtg = reward::rtg_sequence(reward::initial_rtg(p.alpha, int(steps.size())), ep.rewards);
  return ep;
}

}  // namespace

Episode expert_episode(const scene::Scene& scn, const std::vector<planner::PlanStep>& steps,
                       const ExpertParams& p, uint64_t seed, int id) {
  if (p.n <= 0) throw Error(Error::Kind::InfeasibleSegment, "segment length must be positive");
  uint64_t stream = rng::mix2(seed, uint64_t(id));
  // a start layout can land outside the arms' reach budget; halve the layout
  // jitter (fresh draw stream each try) until the whole plan goes through
  int tries = p.start_jitter > 0 ? 6 : 1;
  for (int a = 0; a < tries; ++a) {
    double sj = p.start_jitter * std::pow(0.5, double(a));
    if (a == tries - 1) sj = p.start_jitter > 0 ? 0.0 : p.start_jitter;
    try {
      return build_episode(scn, steps, p, a == 0 ? stream : rng::mix2(stream, uint64_t(a)), sj,
                           id);
    } catch (const Error& err) {
      if (err.kind != Error::Kind::InfeasibleSegment || a == tries - 1) throw;
    }
  }
  throw Error(Error::Kind::InfeasibleSegment, "unreachable");
}

Dataset build_dataset(const scene::Scene& scn, const std::string& scene_name,
                      const std::string& scene_text, const std::vector<planner::PlanStep>& plan,
                      const ExpertParams& p, int episodes, uint64_t seed) {
  Dataset d;
  d.header.state_dim = scn.state_dim();
  d.header.action_dim = scn.action_dim();
  d.header.goal_dim = 3;
  d.header.n = p.n;
  d.header.alpha = p.alpha;
  d.header.seed = seed;
  d.header.episodes = episodes;
  d.header.scene_name = scene_name;
  d.header.scene_hash = jsonio::hex64(jsonio::fnv1a64(scene_text));
  for (int i = 0; i < episodes; ++i)
    d.episodes.push_back(expert_episode(scn, plan, p, seed, i));
  return d;
}

std::string serialize_dataset(const Dataset& d) {
  jsonio::Writer w;
  {
    w.raw("{\"state_dim\":");
    w.num(int64_t(d.header.state_dim));
    w.raw(",\"action_dim\":");
    w.num(int64_t(d.header.action_dim));
    w.raw(",\"goal_dim\":");
    w.num(int64_t(d.header.goal_dim));
    w.raw(",\"n\":");
    w.num(int64_t(d.header.n));
    w.raw(",\"alpha\":");
    w.num(d.header.alpha);
    w.raw(",\"seed\":");
    w.num(int64_t(d.header.seed));
    w.raw(",\"episodes\":");
    w.num(int64_t(d.header.episodes));
    w.raw(",\"scene_name\":");
    w.str(d.header.scene_name);
    w.raw(",\"scene_hash\":");
    w.str(d.header.scene_hash);
    w.raw(",\"config_hash\":");
    w.str(d.header.config_hash);
    w.raw("}\n");
  }
  for (const Episode& ep : d.episodes) {
    w.raw("{\"id\":");
    w.num(int64_t(ep.id));
    w.raw(",\"plan\":[");
    for (size_t i = 0; i < ep.plan.size(); ++i) {
      if (i) w.raw(",");
      w.str(ep.plan[i]);
    }
    w.raw("],\"segs\":[");
    for (size_t i = 0; i < ep.segments.size(); ++i) {
      if (i) w.raw(",");
      w.raw("[");
      w.num(int64_t(ep.segments[i].first));
      w.raw(",");
      w.num(int64_t(ep.segments[i].second));
      w.raw("]");
    }
    w.raw("],\"r\":");
    w.arr(ep.rewards);
    w.raw(",\"rtg\":");
    w.arr(ep.rtg);
    w.raw(",\"s\":");
    w.arr2(ep.states);
    w.raw(",\"g\":");
    w.arr2(ep.goals);
    w.raw(",\"a\":");
    w.arr2(ep.actions);
    w.raw("}\n");
  }
  return w.out;
}

namespace {

std::vector<double> to_vec(const nlohmann::json& j) {
  std::vector<double> v;
  for (const auto& x : j) v.push_back(x.get<double>());
  return v;
}

std::vector<std::vector<double>> to_vec2(const nlohmann::json& j) {
  std::vector<std::vector<double>> v;
  for (const auto& row : j) v.push_back(to_vec(row));
  return v;
}

}  // namespace

Dataset parse_dataset(const std::string& text) {
  Dataset d;
  size_t pos = 0;
  int lineno = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    ++lineno;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw Error(Error::Kind::BadFile, "line " + std::to_string(lineno) + " is not JSON");
    try {
      if (lineno == 1) {
        d.header.state_dim = j.at("state_dim").get<int>();
        d.header.action_dim = j.at("action_dim").get<int>();
        d.header.goal_dim = j.at("goal_dim").get<int>();
        d.header.n = j.at("n").get<int>();
        d.header.alpha = j.at("alpha").get<double>();
        d.header.seed = uint64_t(j.at("seed").get<int64_t>());
        d.header.episodes = j.at("episodes").get<int>();
        d.header.scene_name = j.at("scene_name").get<std::string>();
        d.header.scene_hash = j.at("scene_hash").get<std::string>();
        d.header.config_hash = j.value("config_hash", std::string());
        continue;
      }
      Episode ep;
      ep.id = j.at("id").get<int>();
      for (const auto& s : j.at("plan")) ep.plan.push_back(s.get<std::string>());
      for (const auto& seg : j.at("segs"))
        ep.segments.emplace_back(seg.at(0).get<int>(), seg.at(1).get<int>());
      ep.rewards = to_vec(j.at("r"));
      ep.rtg = to_vec(j.at("rtg"));
      ep.states = to_vec2(j.at("s"));
      ep.goals = to_vec2(j.at("g"));
      ep.actions = to_vec2(j.at("a"));
      if (ep.states.size() != ep.actions.size() + 1 || ep.goals.size() != ep.states.size() ||
          ep.rtg.size() != ep.states.size() || ep.rewards.size() != ep.actions.size())
        throw Error(Error::Kind::BadFile,
                    "episode " + std::to_string(ep.id) + " has inconsistent lengths");
      d.episodes.push_back(std::move(ep));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Error::Kind::BadFile,
                  "line " + std::to_string(lineno) + ": " + std::string(ex.what()));
    }
  }
  if (lineno == 0) throw Error(Error::Kind::BadFile, "empty dataset");
  if (int(d.episodes.size()) != d.header.episodes)
    throw Error(Error::Kind::BadFile, "header promises " + std::to_string(d.header.episodes) +
                                          " episodes, found " +
                                          std::to_string(d.episodes.size()));
  return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
  jsonio::write_file(path, serialize_dataset(d));
}

Dataset load_dataset(const std::string& path) { return parse_dataset(jsonio::read_file(path)); }

}  // namespace traj
