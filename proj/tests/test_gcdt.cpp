#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "json.hpp"
#include "manipdt/gcdt.hpp"
#include "manipdt/jsonio.hpp"
#include "manipdt/traj.hpp"
#include "util.hpp"

namespace {

const char* kPlanText =
    "PICK dave bread_slice1\n"
    "PUT david bread_slice1 cutting_board\n"
    "PICK chad beef_patty\n"
    "PUT chad beef_patty bread_slice1\n"
    "PICK david bacon\n"
    "PUT david bacon beef_patty\n"
    "PICK chad cucumber\n"
    "PUT chad cucumber bacon\n"
    "PICK chad ham\n"
    "PUT chad ham cucumber\n"
    "PICK david bread_slice2\n"
    "PUT david bread_slice2 ham\n";

scene::Scene sandwich_scene() {
  return scene::parse_scene(testutil::read_task("sandwich_scene.json"));
}

std::vector<planner::PlanStep> sandwich_plan() { return planner::parse_plan_text(kPlanText); }

traj::Episode sandwich_episode(uint64_t seed, int id) {
  traj::ExpertParams p;
  return traj::expert_episode(sandwich_scene(), sandwich_plan(), p, seed, id);
}

gcdt::ModelConfig tiny_cfg() {
  gcdt::ModelConfig c;
  c.state_dim = 7;
  c.action_dim = 4;
  c.goal_dim = 3;
  c.d_model = 8;
  c.n_layers = 2;
  c.n_heads = 2;
  c.context = 4;
  c.max_timestep = 16;
  c.dropout = 0;
  return c;
}

std::vector<double> rand_row(rng::Rng& rg, int n, double s = 1.0) {
  std::vector<double> r(size_t(n), 0.0);
  for (double& x : r) x = rg.gaussian() * s;
  return r;
}

gcdt::Window rand_window(rng::Rng& rg, const gcdt::ModelConfig& c, int m) {
  gcdt::Window w;
  for (int i = 0; i < m; ++i) {
    w.rtg.push_back(rg.gaussian());
    w.states.push_back(rand_row(rg, c.state_dim));
    w.goals.push_back(rand_row(rg, c.goal_dim));
    if (i < m - 1) w.actions.push_back(rand_row(rg, c.action_dim, 0.05));
    w.timesteps.push_back(i);
  }
  return w;
}

// the whole policy forward as one gradcheck config; the same seed produces
// the same configuration at either precision
template <typename T>
gradcheck::Config<T> policy_forward_config(uint64_t seed) {
  gcdt::ModelConfig mc = tiny_cfg();
  auto model = std::make_shared<gcdt::Model<T>>(mc, seed);
  rng::Rng rg(rng::mix2(seed, 7));
  gcdt::Window w = rand_window(rg, mc, 3);
  nn::Mat<T> y(3, mc.action_dim);
  for (T& x : y.v) x = T(rg.gaussian() * 0.05);
  return {"full_policy_forward", model->params(),
          [model, w, y](nn::Tape<T>& t, const std::vector<int>& p) {
            return t.mse(model->forward(t, p, w, nullptr), t.input(y));
          }};
}

}  // namespace

TEST_CASE("model config survives the json round trip and rejects junk") {
  gcdt::ModelConfig c;
  c.d_model = 48;
  c.use_goal = false;
  c.dropout = 0.25;
  gcdt::ModelConfig back = gcdt::parse_config_json(gcdt::config_json(c));
  CHECK(back.state_dim == c.state_dim);
  CHECK(back.d_model == 48);
  CHECK(back.dropout == 0.25);
  CHECK(back.use_goal == false);
  CHECK(gcdt::config_json(back) == gcdt::config_json(c));

  CHECK_THROWS_AS(gcdt::parse_config_json("nonsense"), gcdt::Error);
  CHECK_THROWS_AS(gcdt::parse_config_json("{\"state_dim\":31}"), gcdt::Error);
  nlohmann::json j = nlohmann::json::parse(gcdt::config_json(c));
  j["d_model"] = 50;  // 50 % 2 heads is fine; break the head split instead
  j["n_heads"] = 3;
  CHECK_THROWS_AS(gcdt::parse_config_json(j.dump()), gcdt::Error);
}

TEST_CASE("windows slice episode history with the context cap and clamp") {
  traj::Episode ep = sandwich_episode(11, 0);
  gcdt::Window w0 = gcdt::make_window(ep, 0, 8, 128);
  CHECK(w0.steps() == 1);
  CHECK(w0.actions.empty());
  CHECK(w0.timesteps == std::vector<int>{0});
  CHECK(w0.rtg[0] == ep.rtg[0]);

  gcdt::Window w3 = gcdt::make_window(ep, 3, 8, 128);
  CHECK(w3.steps() == 4);
  CHECK(w3.actions.size() == 3);
  CHECK(w3.states[0] == ep.states[0]);
  CHECK(w3.states[3] == ep.states[3]);
  CHECK(w3.actions[2] == ep.actions[2]);

  gcdt::Window w10 = gcdt::make_window(ep, 10, 8, 128);
  CHECK(w10.steps() == 8);
  CHECK(w10.states[0] == ep.states[3]);
  // positions are window-relative so history slices line up across episodes
  CHECK(w10.timesteps.front() == 0);
  CHECK(w10.timesteps.back() == 7);

  gcdt::Window wc = gcdt::make_window(ep, 10, 8, 4);
  CHECK(wc.timesteps.front() == 0);
  CHECK(wc.timesteps.back() == 3);  // clamped at the table edge

  CHECK_THROWS_AS(gcdt::make_window(ep, ep.steps(), 8, 128), gcdt::Error);
  CHECK_THROWS_AS(gcdt::make_window(ep, -1, 8, 128), gcdt::Error);
}

TEST_CASE("predictions have one bounded action row per step") {
  gcdt::ModelConfig c = tiny_cfg();
  gcdt::Model<float> model(c, 99);
  rng::Rng rg(5);
  for (int m : {1, 2, 4}) {
    gcdt::Window w = rand_window(rg, c, m);
    nn::Mat<float> y = model.predict(w);
    CHECK(y.rows == m);
    CHECK(y.cols == c.action_dim);
    for (float v : y.v) {
      CHECK(std::isfinite(v));
      CHECK(std::abs(v) < float(c.action_scale));
    }
  }
  gcdt::Window big = rand_window(rg, c, 5);  // context is 4
  CHECK_THROWS_AS(model.predict(big), gcdt::Error);
  gcdt::Window bad = rand_window(rg, c, 2);
  bad.timesteps[1] = c.max_timestep;
  CHECK_THROWS_AS(model.predict(bad), gcdt::Error);
  bad.timesteps[1] = 1;
  bad.actions.clear();
  CHECK_THROWS_AS(model.predict(bad), gcdt::Error);
}

TEST_CASE("the full policy forward passes the gradient check at both precisions") {
  auto cd = policy_forward_config<double>(321);
  CHECK(gradcheck::max_rel_err(cd) < 1e-6);
  auto cf = policy_forward_config<float>(321);
  CHECK(gradcheck::max_rel_err_f32(cf, cd) < 1e-3);
}

TEST_CASE("zeroing the goal slot makes predictions goal-invariant") {
  gcdt::ModelConfig c = tiny_cfg();
  c.use_goal = false;
  gcdt::Model<float> model(c, 4);
  rng::Rng rg(6);
  gcdt::Window w = rand_window(rg, c, 3);
  nn::Mat<float> y0 = model.predict(w);
  for (auto& g : w.goals)
    for (double& x : g) x += 3.0;
  CHECK(model.predict(w) == y0);

  gcdt::ModelConfig cg = tiny_cfg();
  gcdt::Model<float> mg(cg, 4);
  gcdt::Window w2 = rand_window(rg, cg, 3);
  nn::Mat<float> z0 = mg.predict(w2);
  w2.goals[2][0] += 1.0;
  CHECK(mg.predict(w2) != z0);
}

TEST_CASE("future tokens never touch past predictions") {
  gcdt::ModelConfig c = tiny_cfg();
  c.d_model = 16;
  c.context = 8;
  gcdt::Model<float> model(c, 17);
  rng::Rng rg(18);
  for (int trial = 0; trial < 10; ++trial) {
    int m = 3 + int(rg.below(6));
    gcdt::Window w = rand_window(rg, c, m);
    nn::Mat<float> base = model.predict(w);
    int cut = 1 + int(rg.below(uint64_t(m - 1)));
    gcdt::Window p = w;
    for (int j = cut; j < m; ++j) {
      p.rtg[size_t(j)] += 1.5;
      for (double& x : p.states[size_t(j)]) x += 0.7;
      for (double& x : p.goals[size_t(j)]) x -= 0.4;
    }
    // a_{cut-1} sits after the goal token that predicts step cut-1
    for (int j = cut - 1; j < m - 1; ++j)
      for (double& x : p.actions[size_t(j)]) x += 0.02;
    nn::Mat<float> pert = model.predict(p);
    for (int i = 0; i < cut; ++i)
      for (int col = 0; col < c.action_dim; ++col)
        CHECK(pert.at(i, col) == base.at(i, col));  // bitwise
  }
}

TEST_CASE("checkpoints restore the exact model") {
  gcdt::ModelConfig c = tiny_cfg();
  c.dropout = 0.1;
  gcdt::Model<float> model(c, 42);
  std::string path = testutil::bin_path("gcdt_ckpt_test.bin");
  model.save(path);
  gcdt::Model<float> back = gcdt::Model<float>::load(path);
  CHECK(back.cfg().d_model == c.d_model);
  CHECK(back.cfg().dropout == c.dropout);
  CHECK(back.names() == model.names());
  REQUIRE(back.params().size() == model.params().size());
  for (size_t i = 0; i < model.params().size(); ++i)
    CHECK(back.params()[i] == model.params()[i]);  // float round trip is exact

  rng::Rng rg(43);
  gcdt::Window w = rand_window(rg, c, 3);
  CHECK(back.predict(w) == model.predict(w));

  std::string again = testutil::bin_path("gcdt_ckpt_test2.bin");
  back.save(again);
  CHECK(jsonio::read_file(again) == jsonio::read_file(path));

  // a tensor list that does not match the architecture is refused
  std::vector<nn::NamedMat> odd;
  odd.push_back({"mystery", nn::Mat<float>(1, 1)});
  std::string bad = testutil::bin_path("gcdt_ckpt_bad.bin");
  nn::save_checkpoint(bad, gcdt::config_json(c), odd);
  CHECK_THROWS_AS(gcdt::Model<float>::load(bad), gcdt::Error);
}

TEST_CASE("training lowers the cloning loss and is seed-deterministic") {
  std::vector<traj::Episode> eps;
  for (int i = 0; i < 6; ++i) eps.push_back(sandwich_episode(21, i));
  std::vector<const traj::Episode*> ptrs;
  for (const auto& e : eps) ptrs.push_back(&e);

  gcdt::ModelConfig c;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.context = 8;
  c.max_timestep = 128;
  gcdt::TrainConfig tc;
  tc.steps = 30;
  tc.batch = 8;
  tc.lr = 1e-3;
  tc.seed = 5;

  gcdt::Model<float> m1(c, 7);
  gcdt::Model<float> m2 = m1;
  gcdt::TrainStats s1 = gcdt::train(m1, ptrs, tc);
  REQUIRE(int(s1.losses.size()) == tc.steps);
  for (double l : s1.losses) CHECK(std::isfinite(l));
  double head = 0, tail = 0;
  for (int i = 0; i < 5; ++i) {
    head += s1.losses[size_t(i)];
    tail += s1.losses[s1.losses.size() - 1 - size_t(i)];
  }
  CHECK(tail < head);

  gcdt::TrainStats s2 = gcdt::train(m2, ptrs, tc);
  CHECK(s1.losses == s2.losses);
  for (size_t i = 0; i < m1.params().size(); ++i) CHECK(m1.params()[i] == m2.params()[i]);

  gcdt::Model<float> wrong(tiny_cfg(), 1);
  CHECK_THROWS_AS(gcdt::train(wrong, ptrs, tc), gcdt::Error);
  CHECK_THROWS_AS(gcdt::train(m1, {}, tc), gcdt::Error);
}

TEST_CASE("rollouts respect the per-subgoal budget and stop on failure") {
  scene::Scene scn = sandwich_scene();
  auto plan = sandwich_plan();
  gcdt::ModelConfig c;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.context = 8;
  c.max_timestep = 512;
  gcdt::RolloutParams rp;
  rp.n = 2;
  rp.h = 4;

  for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    gcdt::Model<float> model(c, seed);  // untrained: goes nowhere, fails fast
    std::vector<gcdt::TraceStep> trace;
    gcdt::RolloutResult r =
        gcdt::rollout(model, env::Env(scn, rp.env_params), plan, rp, &trace);
    CHECK(r.total_steps <= rp.h * int(plan.size()));
    CHECK(int(trace.size()) == r.total_steps);
    CHECK(r.subgoals.size() <= plan.size());
    for (const auto& sg : r.subgoals) CHECK(sg.steps <= rp.h);
    if (!r.episode_success) {
      CHECK(r.subgoals.back().success == false);
      CHECK(r.subgoals.back().steps == rp.h);
    }
    CHECK(trace.front().rtg == 12.0);  // alpha per subgoal, before any reward
  }

  gcdt::Model<float> model(c, 1);
  std::vector<gcdt::TraceStep> t1, t2;
  gcdt::RolloutResult a = gcdt::rollout(model, env::Env(scn, rp.env_params), plan, rp, &t1);
  gcdt::RolloutResult b = gcdt::rollout(model, env::Env(scn, rp.env_params), plan, rp, &t2);
  CHECK(a.total_steps == b.total_steps);
  CHECK(a.subgoal_rate == b.subgoal_rate);
  REQUIRE(t1.size() == t2.size());
  for (size_t i = 0; i < t1.size(); ++i) {
    CHECK(t1[i].action == t2[i].action);
    CHECK(t1[i].rtg == t2[i].rtg);
  }

  gcdt::RolloutParams badp;
  badp.n = 5;
  badp.h = 12;  // not a multiple
  CHECK_THROWS_AS(gcdt::rollout(model, env::Env(scn, rp.env_params), plan, badp), gcdt::Error);
  CHECK_THROWS_AS(gcdt::rollout(model, env::Env(scn, rp.env_params), {}, rp), gcdt::Error);
  gcdt::Model<float> wrong(tiny_cfg(), 1);
  CHECK_THROWS_AS(gcdt::rollout(wrong, env::Env(scn, rp.env_params), plan, rp), gcdt::Error);
}

TEST_CASE("evaluation reruns the same seeded perturbations") {
  scene::Scene scn = sandwich_scene();
  auto plan = sandwich_plan();
  gcdt::ModelConfig c;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.context = 8;
  c.max_timestep = 512;
  gcdt::Model<float> model(c, 9);

  gcdt::EvalParams ep;
  ep.episodes = 3;
  ep.seed = 77;
  ep.rp.n = 2;
  ep.rp.h = 4;
  gcdt::EvalReport r1 = gcdt::evaluate(model, scn, plan, ep);
  CHECK(int(r1.runs.size()) == ep.episodes);
  CHECK(r1.subgoal_success >= 0.0);
  CHECK(r1.subgoal_success <= 1.0);
  CHECK(r1.mean_length > 0.0);
  gcdt::EvalReport r2 = gcdt::evaluate(model, scn, plan, ep);
  CHECK(r1.subgoal_success == r2.subgoal_success);
  CHECK(r1.mean_length == r2.mean_length);

  ep.moved_items = {0, 3};
  gcdt::EvalReport r3 = gcdt::evaluate(model, scn, plan, ep);
  CHECK(int(r3.runs.size()) == ep.episodes);
  ep.moved_items = {99};
  CHECK_THROWS_AS(gcdt::evaluate(model, scn, plan, ep), gcdt::Error);
}
