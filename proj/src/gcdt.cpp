#include "manipdt/gcdt.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "json.hpp"
#include "manipdt/jsonio.hpp"

namespace gcdt {
namespace {

constexpr int kEmbedCount = 9;   // four (w, b) pairs plus the timestep table
constexpr int kPerLayer = 16;
constexpr double kTau = 6.283185307179586;

int layer_base(int layer) { return kEmbedCount + layer * kPerLayer; }

template <typename T>
nn::Mat<T> to_mat(const std::vector<std::vector<double>>& rows, int cols) {
  nn::Mat<T> m(int(rows.size()), cols);
  for (size_t r = 0; r < rows.size(); ++r) {
    if (int(rows[r].size()) != cols) throw Error("row width mismatch in model input");
    for (int c = 0; c < cols; ++c) m.at(int(r), c) = T(rows[r][size_t(c)]);
  }
  return m;
}

}  // namespace

std::string config_json(const ModelConfig& c) {
  jsonio::Writer w;
  w.raw("{\"state_dim\":");
  w.num(int64_t(c.state_dim));
  w.raw(",\"action_dim\":");
  w.num(int64_t(c.action_dim));
  w.raw(",\"goal_dim\":");
  w.num(int64_t(c.goal_dim));
  w.raw(",\"d_model\":");
  w.num(int64_t(c.d_model));
  w.raw(",\"n_layers\":");
  w.num(int64_t(c.n_layers));
  w.raw(",\"n_heads\":");
  w.num(int64_t(c.n_heads));
  w.raw(",\"context\":");
  w.num(int64_t(c.context));
  w.raw(",\"max_timestep\":");
  w.num(int64_t(c.max_timestep));
  w.raw(",\"dropout\":");
  w.num(c.dropout);
  w.raw(",\"action_scale\":");
  w.num(c.action_scale);
  w.raw(",\"use_goal\":");
  w.boolean(c.use_goal);
  w.raw("}");
  return w.out;
}

ModelConfig parse_config_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error("model config is not a JSON object");
  ModelConfig c;
  try {
    c.state_dim = j.at("state_dim").get<int>();
    c.action_dim = j.at("action_dim").get<int>();
    c.goal_dim = j.at("goal_dim").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.context = j.at("context").get<int>();
    c.max_timestep = j.at("max_timestep").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.action_scale = j.at("action_scale").get<double>();
    c.use_goal = j.at("use_goal").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad model config: ") + e.what());
  }
  if (c.state_dim <= 0 || c.action_dim <= 0 || c.goal_dim <= 0 || c.d_model <= 0 ||
      c.n_layers <= 0 || c.n_heads <= 0 || c.context <= 0 || c.max_timestep <= 0)
    throw Error("bad model config: dimensions must be positive");
  if (c.d_model % c.n_heads != 0) throw Error("bad model config: d_model % n_heads != 0");
  return c;
}

// Positions are window-relative, not absolute episode steps: the policy then
// conditions on return-to-go, state, and goal rather than on where it sits in
// one particular plan, which is what lets it run plans of unseen length.
Window make_window(const traj::Episode& ep, int tau, int context, int max_timestep) {
  if (tau < 0 || tau >= ep.steps()) throw Error("window step out of range");
  if (context <= 0) throw Error("window context must be positive");
  int m = std::min(tau + 1, context);
  int lo = tau + 1 - m;
  Window w;
  for (int i = lo; i <= tau; ++i) {
    w.rtg.push_back(ep.rtg[size_t(i)]);
    w.states.push_back(ep.states[size_t(i)]);
    w.goals.push_back(ep.goals[size_t(i)]);
    if (i < tau) w.actions.push_back(ep.actions[size_t(i)]);
    w.timesteps.push_back(std::min(i - lo, max_timestep - 1));
  }
  return w;
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  if (cfg.d_model % cfg.n_heads != 0) throw Error("d_model must divide into heads");
  rng::Rng rg(seed);
  auto gauss = [&](int r, int c) {
    nn::Mat<T> m(r, c);
    for (T& x : m.v) x = T(rg.gaussian() * 0.02);
    return m;
  };
  auto zeros = [](int r, int c) { return nn::Mat<T>(r, c); };
  auto ones = [](int c) {
    nn::Mat<T> m(1, c);
    for (T& x : m.v) x = T(1);
    return m;
  };
  auto push = [&](const std::string& name, nn::Mat<T> m, bool nd) {
    names_.push_back(name);
    params_.push_back(std::move(m));
    no_decay_.push_back(nd);
  };

  int d = cfg.d_model;
  push("embed_rtg.w", gauss(1, d), false);
  push("embed_rtg.b", zeros(1, d), true);
  push("embed_state.w", gauss(cfg.state_dim, d), false);
  push("embed_state.b", zeros(1, d), true);
  push("embed_goal.w", gauss(cfg.goal_dim, d), false);
  push("embed_goal.b", zeros(1, d), true);
  push("embed_action.w", gauss(cfg.action_dim, d), false);
  push("embed_action.b", zeros(1, d), true);
  push("embed_timestep", gauss(cfg.max_timestep, d), true);
  for (int l = 0; l < cfg.n_layers; ++l) {
    std::string p = "layers." + std::to_string(l) + ".";
    push(p + "ln1.g", ones(d), true);
    push(p + "ln1.b", zeros(1, d), true);
    push(p + "attn.wq", gauss(d, d), false);
    push(p + "attn.bq", zeros(1, d), true);
    push(p + "attn.wk", gauss(d, d), false);
    push(p + "attn.bk", zeros(1, d), true);
    push(p + "attn.wv", gauss(d, d), false);
    push(p + "attn.bv", zeros(1, d), true);
    push(p + "attn.wo", gauss(d, d), false);
    push(p + "attn.bo", zeros(1, d), true);
    push(p + "ln2.g", ones(d), true);
    push(p + "ln2.b", zeros(1, d), true);
    push(p + "mlp.w1", gauss(d, 4 * d), false);
    push(p + "mlp.b1", zeros(1, 4 * d), true);
    push(p + "mlp.w2", gauss(4 * d, d), false);
    push(p + "mlp.b2", zeros(1, d), true);
  }
  push("ln_f.g", ones(d), true);
  push("ln_f.b", zeros(1, d), true);
  push("head.w", gauss(d, cfg.action_dim), false);
  push("head.b", zeros(1, cfg.action_dim), true);
}

template <typename T>
std::vector<int> Model<T>::register_params(nn::Tape<T>& t) const {
  std::vector<int> ids;
  ids.reserve(params_.size());
  for (const auto& p : params_) ids.push_back(t.param(p));
  return ids;
}

template <typename T>
int Model<T>::forward(nn::Tape<T>& t, const std::vector<int>& pids, const Window& w,
                      rng::Rng* drop_rng) const {
  int m = w.steps();
  if (m < 1) throw Error("empty window");
  if (m > cfg_.context) throw Error("window longer than the model context");
  if (int(w.actions.size()) != m - 1) throw Error("window needs one action per past step");
  if (int(w.states.size()) != m || int(w.goals.size()) != m || int(w.timesteps.size()) != m)
    throw Error("window slot lengths disagree");
  for (int ts : w.timesteps)
    if (ts < 0 || ts >= cfg_.max_timestep) throw Error("window timestep out of range");
  if (pids.size() != params_.size()) throw Error("wrong parameter registration");

  auto dropped = [&](int id) {
    if (drop_rng == nullptr || cfg_.dropout <= 0) return id;
    const nn::Mat<T>& v = t.val(id);
    nn::Mat<T> mask(v.rows, v.cols);
    T keep = T(1.0 / (1.0 - cfg_.dropout));
    for (T& x : mask.v) x = drop_rng->uniform() < cfg_.dropout ? T(0) : keep;
    return t.mul(id, t.input(std::move(mask)));
  };

  nn::Mat<T> rtg_m(m, 1);
  for (int i = 0; i < m; ++i) rtg_m.at(i, 0) = T(w.rtg[size_t(i)]);
  nn::Mat<T> state_m = to_mat<T>(w.states, cfg_.state_dim);
  nn::Mat<T> goal_m = cfg_.use_goal ? to_mat<T>(w.goals, cfg_.goal_dim)
                                    : nn::Mat<T>(m, cfg_.goal_dim);

  // one shared position row per step, added to every slot of that step
  int tpos = t.gather_rows(pids[8], w.timesteps);
  auto embed = [&](const nn::Mat<T>& x, int wi, int pos) {
    return t.add(t.add_bias(t.matmul(t.input(x), pids[wi]), pids[wi + 1]), pos);
  };
  int e_rtg = embed(rtg_m, 0, tpos);
  int e_state = embed(state_m, 2, tpos);
  int e_goal = embed(goal_m, 4, tpos);

  std::vector<int> parts{e_rtg, e_state, e_goal};
  if (m > 1) {
    nn::Mat<T> act_m = to_mat<T>(w.actions, cfg_.action_dim);
    std::vector<int> past(w.timesteps.begin(), w.timesteps.end() - 1);
    parts.push_back(embed(act_m, 6, t.gather_rows(pids[8], past)));
  }

  // slot-major rows -> step-major sequence (r_i, s_i, g_i, a_i), no trailing a
  std::vector<int> order;
  for (int i = 0; i < m; ++i) {
    order.push_back(i);
    order.push_back(m + i);
    order.push_back(2 * m + i);
    if (i < m - 1) order.push_back(3 * m + i);
  }
  int x = dropped(t.gather_rows(t.vcat(parts), order));

  for (int l = 0; l < cfg_.n_layers; ++l) {
    int b = layer_base(l);
    int xn = t.layer_norm(x, pids[b], pids[b + 1]);
    int att = t.causal_attention(t.add_bias(t.matmul(xn, pids[b + 2]), pids[b + 3]),
                                 t.add_bias(t.matmul(xn, pids[b + 4]), pids[b + 5]),
                                 t.add_bias(t.matmul(xn, pids[b + 6]), pids[b + 7]),
                                 cfg_.n_heads);
    x = t.add(x, dropped(t.add_bias(t.matmul(att, pids[b + 8]), pids[b + 9])));
    int x2 = t.layer_norm(x, pids[b + 10], pids[b + 11]);
    int h = t.gelu(t.add_bias(t.matmul(x2, pids[b + 12]), pids[b + 13]));
    x = t.add(x, dropped(t.add_bias(t.matmul(h, pids[b + 14]), pids[b + 15])));
  }

  int fb = layer_base(cfg_.n_layers);
  x = t.layer_norm(x, pids[fb], pids[fb + 1]);
  std::vector<int> gpos;
  for (int i = 0; i < m; ++i) gpos.push_back(4 * i + 2);
  int feats = t.gather_rows(x, gpos);
  int head = t.add_bias(t.matmul(feats, pids[fb + 2]), pids[fb + 3]);
  return t.scale(t.tanh_(head), T(cfg_.action_scale));
}

template <typename T>
nn::Mat<T> Model<T>::predict(const Window& w) const {
  nn::Tape<T> t;
  std::vector<int> pids = register_params(t);
  return t.val(forward(t, pids, w, nullptr));
}

template <typename T>
void Model<T>::save(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& extra) const {
  std::vector<nn::NamedMat> tensors;
  tensors.reserve(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    nn::Mat<float> f(params_[i].rows, params_[i].cols);
    for (size_t e = 0; e < params_[i].v.size(); ++e) f.v[e] = float(params_[i].v[e]);
    tensors.push_back({names_[i], std::move(f)});
  }
  std::string meta = config_json(cfg_);
  if (!extra.empty()) {
    jsonio::Writer w;
    w.out = meta.substr(0, meta.size() - 1);  // reopen the object
    for (const auto& [key, value] : extra) {
      w.raw(",");
      w.str(key);
      w.raw(":");
      w.str(value);
    }
    w.raw("}");
    meta = std::move(w.out);
  }
  nn::save_checkpoint(path, meta, tensors);
}

template <typename T>
Model<T> Model<T>::load(const std::string& path) {
  nn::Checkpoint ck = nn::load_checkpoint(path);
  Model out(parse_config_json(ck.meta_json), 0);
  if (ck.tensors.size() != out.params_.size()) throw Error("checkpoint tensor count mismatch");
  for (size_t i = 0; i < ck.tensors.size(); ++i) {
    const nn::NamedMat& t = ck.tensors[i];
    nn::Mat<T>& p = out.params_[i];
    if (t.name != out.names_[i]) throw Error("checkpoint tensor name mismatch: " + t.name);
    if (t.m.rows != p.rows || t.m.cols != p.cols)
      throw Error("checkpoint tensor shape mismatch: " + t.name);
    for (size_t e = 0; e < p.v.size(); ++e) p.v[e] = T(t.m.v[e]);
  }
  return out;
}

template class Model<float>;
template class Model<double>;

std::vector<const traj::Episode*> episode_ptrs(const traj::Dataset& d) {
  std::vector<const traj::Episode*> out;
  out.reserve(d.episodes.size());
  for (const traj::Episode& e : d.episodes) out.push_back(&e);
  return out;
}

TrainStats train(Model<float>& model, const std::vector<const traj::Episode*>& episodes,
                 const TrainConfig& tc) {
  const ModelConfig& cfg = model.cfg();
  if (episodes.empty()) throw Error("no training episodes");
  if (tc.steps <= 0 || tc.batch <= 0) throw Error("bad training schedule");
  std::vector<int64_t> prefix{0};
  for (const traj::Episode* e : episodes) {
    if (e->steps() < 1) throw Error("episode with no steps");
    if (int(e->states[0].size()) != cfg.state_dim || int(e->actions[0].size()) != cfg.action_dim ||
        int(e->goals[0].size()) != cfg.goal_dim)
      throw Error("episode dimensions do not match the model");
    prefix.push_back(prefix.back() + e->steps());
  }
  int64_t total = prefix.back();

  rng::Rng sample(rng::mix2(tc.seed, 0));
  rng::Rng drop(rng::mix2(tc.seed, 1));
  nn::AdamW<float> opt;
  opt.lr = tc.lr;
  opt.weight_decay = tc.weight_decay;

  std::vector<nn::Mat<float>> acc;
  for (const auto& p : model.params()) acc.emplace_back(p.rows, p.cols);

  TrainStats stats;
  for (int step = 0; step < tc.steps; ++step) {
    for (auto& g : acc) std::fill(g.v.begin(), g.v.end(), 0.0f);
    double loss_sum = 0;
    for (int b = 0; b < tc.batch; ++b) {
      int64_t u = int64_t(sample.below(uint64_t(total)));
      size_t e = size_t(std::upper_bound(prefix.begin(), prefix.end(), u) - prefix.begin()) - 1;
      int tau = int(u - prefix[e]);
      const traj::Episode& ep = *episodes[e];
      Window w = make_window(ep, tau, cfg.context, cfg.max_timestep);
      int m = w.steps();
      nn::Mat<float> y(m, cfg.action_dim);
      for (int i = 0; i < m; ++i) {
        const std::vector<double>& a = ep.actions[size_t(tau + 1 - m + i)];
        for (int c = 0; c < cfg.action_dim; ++c) y.at(i, c) = float(a[size_t(c)]);
      }
      nn::Tape<float> t;
      std::vector<int> pids = model.register_params(t);
      int loss = t.mse(model.forward(t, pids, w, &drop), t.input(std::move(y)));
      t.backward(loss);
      loss_sum += double(t.val(loss).at(0, 0));
      for (size_t i = 0; i < acc.size(); ++i) {
        const nn::Mat<float>& g = t.grad(pids[i]);
        for (size_t k = 0; k < g.v.size(); ++k) acc[i].v[k] += g.v[k];
      }
    }
    float inv = 1.0f / float(tc.batch);
    for (auto& g : acc)
      for (float& x : g.v) x *= inv;
    if (tc.grad_clip > 0) {
      double sq = 0;
      for (const auto& g : acc)
        for (float x : g.v) sq += double(x) * double(x);
      double norm = std::sqrt(sq);
      if (norm > tc.grad_clip) {
        float s = float(tc.grad_clip / norm);
        for (auto& g : acc)
          for (float& x : g.v) x *= s;
      }
    }
    opt.step(model.params(), acc, model.no_decay());
    stats.losses.push_back(loss_sum / tc.batch);
  }
  return stats;
}

RolloutResult rollout(const Model<float>& model, env::Env env,
                      const std::vector<planner::PlanStep>& plan, const RolloutParams& rp,
                      std::vector<TraceStep>* trace) {
  const ModelConfig& cfg = model.cfg();
  const scene::Scene& scn = env.scn();
  if (scn.state_dim() != cfg.state_dim || scn.action_dim() != cfg.action_dim)
    throw Error("scene dimensions do not match the model");
  if (plan.empty()) throw Error("empty plan");
  if (rp.n <= 0 || rp.h <= 0 || rp.h % rp.n != 0) throw Error("budget must be a multiple of n");

  env.reset();
  reward::RtgLedger ledger({rp.alpha, rp.beta, rp.n, rp.h}, int(plan.size()));

  std::vector<double> rtg_h;
  std::vector<std::vector<double>> states_h, goals_h, actions_h;
  RolloutResult out;
  int t_abs = 0;

  for (size_t sgi = 0; sgi < plan.size(); ++sgi) {
    env::Subgoal sg = env.make_subgoal(plan[sgi].verb, plan[sgi].args);
    std::vector<double> goal{sg.target.x, sg.target.y, sg.target.z};
    bool done_sg = false;
    int spent = 0;
    while (spent < rp.h) {
      rtg_h.push_back(ledger.rtg());
      states_h.push_back(env.encoded_state());
      goals_h.push_back(goal);

      int m = std::min(t_abs + 1, cfg.context);
      int lo = t_abs + 1 - m;
      Window w;
      for (int i = lo; i <= t_abs; ++i) {
        w.rtg.push_back(rtg_h[size_t(i)]);
        w.states.push_back(states_h[size_t(i)]);
        w.goals.push_back(goals_h[size_t(i)]);
        if (i < t_abs) w.actions.push_back(actions_h[size_t(i)]);
        w.timesteps.push_back(std::min(i - lo, cfg.max_timestep - 1));
      }

      nn::Mat<float> pred = model.predict(w);
      std::vector<double> act(size_t(cfg.action_dim));
      for (int c = 0; c < cfg.action_dim; ++c) act[size_t(c)] = double(pred.at(m - 1, c));
      std::vector<scene::Vec3> deltas;
      for (int r = 0; r < scn.num_robots(); ++r)
        deltas.push_back({act[size_t(3 * r)], act[size_t(3 * r + 1)], act[size_t(3 * r + 2)]});

      env::StepResult res = env.step(deltas, sg);
      ledger.on_step(res.active_dist);
      actions_h.push_back(act);
      ++t_abs;
      ++spent;
      if (trace != nullptr)
        trace->push_back({t_abs - 1, int(sgi), rtg_h.back(), act, res.active_dist, res.done});
      if (res.done && spent >= rp.n) {
        done_sg = true;
        break;
      }
    }
    out.subgoals.push_back({sg.label, done_sg, spent});
    out.total_steps += spent;
    if (!done_sg) break;
    ledger.advance_subgoal();
    env.set_pulse(true);
  }

  int ok = 0;
  for (const SubgoalOutcome& s : out.subgoals) ok += s.success ? 1 : 0;
  out.subgoal_rate = double(ok) / double(plan.size());
  out.episode_success = size_t(ok) == plan.size();
  return out;
}

EvalReport evaluate(const Model<float>& model, const scene::Scene& scn,
                    const std::vector<planner::PlanStep>& plan, const EvalParams& ep) {
  if (ep.episodes <= 0) throw Error("need at least one eval episode");
  for (int idx : ep.moved_items)
    if (idx < 0 || idx >= scn.num_objects()) throw Error("moved item index out of range");

  EvalReport rep;
  for (int e = 0; e < ep.episodes; ++e) {
    rng::Rng rg(rng::mix2(ep.seed, uint64_t(e)));
    scene::Scene s2 = scn;
    for (scene::Vec3& p : s2.object_start) {
      p.x += rg.gaussian() * ep.start_jitter;
      p.y += rg.gaussian() * ep.start_jitter;
    }
    for (int idx : ep.moved_items) {
      double theta = rg.uniform() * kTau;
      s2.object_start[size_t(idx)].x += std::cos(theta) * ep.move_dist;
      s2.object_start[size_t(idx)].y += std::sin(theta) * ep.move_dist;
    }
    rep.runs.push_back(rollout(model, env::Env(s2, ep.rp.env_params), plan, ep.rp));
  }
  for (const RolloutResult& r : rep.runs) {
    rep.subgoal_success += r.subgoal_rate;
    rep.episode_success += r.episode_success ? 1 : 0;
    rep.mean_length += r.total_steps;
  }
  rep.subgoal_success /= ep.episodes;
  rep.episode_success /= ep.episodes;
  rep.mean_length /= ep.episodes;
  return rep;
}

}  // namespace gcdt
