#include "manipdt/env.hpp"

#include <algorithm>
#include <cmath>

namespace env {

using scene::Vec3;

Env::Env(scene::Scene scn, Params p) : scn_(std::move(scn)), p_(std::move(p)) {
  if (p_.eps <= 0 || p_.delta_max <= 0 || p_.d_min < 0)
    throw Error("eps and delta_max must be positive, d_min non-negative");
  reset();
}

void Env::reset() {
  st_ = State{};
  for (const scene::RobotSpec& r : scn_.robots) st_.arms.push_back(r.home);
  st_.objects = scn_.object_start;
  st_.held_by.assign(size_t(scn_.num_objects()), -1);
  st_.placed_site.assign(size_t(scn_.num_objects()), -1);
  st_.placed_layer.assign(size_t(scn_.num_objects()), -1);
  st_.stack_count.assign(scn_.sites.size(), 0);
  st_.pulse = false;
}

namespace {

// Largest s in [0, 1] with |c - s*v| >= d_min, given |c - v| < d_min.
// The quadratic |c - s v|^2 - d_min^2 opens upward, so the feasible region is
// s <= lower root; no feasible s when even s = 0 violates.
double yield_scale(const Vec3& c, const Vec3& v, double d_min) {
  double v2 = v.dot(v);
  if (v2 == 0.0) return 0.0;
  double cv = c.dot(v);
  double c2 = c.dot(c);
  if (c2 < d_min * d_min) return 0.0;  // stationary arm already too close
  double disc = cv * cv - v2 * (c2 - d_min * d_min);
  if (disc < 0) disc = 0;
  double s = (cv - std::sqrt(disc)) / v2;
  return std::clamp(s, 0.0, 1.0);
}

}  // namespace

std::vector<Vec3> Env::project(const std::vector<Vec3>& deltas) const {
  if (deltas.size() != st_.arms.size()) throw Error("project: one displacement per arm required");
  // Every stage triggers only past a 1e-12 slack, so constraints are enforced
  // to that precision and a projected displacement re-projects bit-identically
  // (exact idempotence) even though boundary values reconstruct only to ulps.
  const double kSlack = 1e-12;
  size_t n = deltas.size();
  std::vector<Vec3> d(n);
  for (size_t i = 0; i < n; ++i) {
    const scene::Box& box = scn_.robots[i].workspace;
    // per-component: reconstruct only components the wall actually clamps, so
    // untouched components survive bit-exactly ((arm + d) - arm is not d)
    auto cl = [&](double delta, double arm, double lo, double hi) {
      double raw = arm + delta;
      if (raw < lo - kSlack) return lo - arm;
      if (raw > hi + kSlack) return hi - arm;
      return delta;
    };
    const Vec3& a = st_.arms[i];
    d[i] = {cl(deltas[i].x, a.x, box.lo.x, box.hi.x), cl(deltas[i].y, a.y, box.lo.y, box.hi.y),
            cl(deltas[i].z, a.z, box.lo.z, box.hi.z)};
    double len = d[i].norm();
    if (len > p_.delta_max + kSlack) d[i] = d[i] * (p_.delta_max / len);
  }
  // clearance: the later-indexed arm yields; if freezing it is not enough the
  // earlier arm yields against the later arm's old position
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      Vec3 pi = st_.arms[i] + d[i];
      if (scene::dist(pi, st_.arms[j] + d[j]) >= p_.d_min - kSlack) continue;
      d[j] = d[j] * yield_scale(pi - st_.arms[j], d[j], p_.d_min);
      if (scene::dist(pi, st_.arms[j] + d[j]) >= p_.d_min - kSlack) continue;
      d[j] = {0, 0, 0};
      d[i] = d[i] * yield_scale(st_.arms[j] - st_.arms[i], d[i], p_.d_min);
    }
  }
  return d;
}

bool Env::feasible(const std::vector<Vec3>& deltas) const {
  std::vector<Vec3> p = project(deltas);
  for (size_t i = 0; i < p.size(); ++i)
    if (!(p[i] == deltas[i])) return false;
  return true;
}

StepResult Env::step(const std::vector<Vec3>& deltas, const Subgoal& sg) {
  if (sg.robot < 0 || sg.robot >= scn_.num_robots() || sg.object < 0 ||
      sg.object >= scn_.num_objects())
    throw Error("step: subgoal does not name a valid robot and object");
  std::vector<Vec3> d = project(deltas);
  for (size_t i = 0; i < st_.arms.size(); ++i) st_.arms[i] = st_.arms[i] + d[i];
  for (size_t o = 0; o < st_.objects.size(); ++o)
    if (st_.held_by[o] >= 0) st_.objects[o] = st_.arms[size_t(st_.held_by[o])];

  StepResult res;
  st_.pulse = false;
  size_t obj = size_t(sg.object);
  size_t rb = size_t(sg.robot);
  if (!sg.is_put) {
    if (st_.held_by[obj] < 0 && st_.placed_site[obj] < 0 &&
        scene::dist(st_.arms[rb], st_.objects[obj]) <= p_.eps) {
      bool hands_full = false;
      for (int h : st_.held_by) hands_full |= (h == sg.robot);
      if (!hands_full) {
        st_.held_by[obj] = sg.robot;
        st_.objects[obj] = st_.arms[rb];
        res.attached = true;
      }
    }
  } else {
    if (sg.site < 0 || sg.site >= int(scn_.sites.size()))
      throw Error("step: PUT subgoal does not name a valid site");
    if (st_.held_by[obj] == sg.robot && st_.stack_count[size_t(sg.site)] == sg.layer &&
        scene::dist(st_.arms[rb], sg.target) <= p_.eps) {
      st_.held_by[obj] = -1;
      st_.objects[obj] = sg.target;
      st_.placed_site[obj] = sg.site;
      st_.placed_layer[obj] = sg.layer;
      st_.stack_count[size_t(sg.site)] += 1;
      res.placed = true;
    }
  }

  res.active_dist = scene::dist(st_.arms[rb], sg.target);
  bool effect = sg.is_put ? (st_.placed_site[obj] == sg.site && st_.placed_layer[obj] == sg.layer)
                          : (st_.held_by[obj] == sg.robot);
  res.done = effect && res.active_dist <= p_.eps;
  return res;
}

Subgoal Env::make_subgoal(const std::string& verb, const std::vector<std::string>& args) const {
  Subgoal sg;
  sg.label = verb;
  for (const std::string& a : args) {
    sg.label += ' ';
    sg.label += scn_.canonical(a);
  }
  if (verb == "pick") {
    if (args.size() != 2) throw Error("pick subgoal needs <robot> <object>");
  } else if (verb == "put") {
    if (args.size() != 3) throw Error("put subgoal needs <robot> <object> <destination>");
    sg.is_put = true;
  } else {
    throw Error("unknown subgoal verb '" + verb + "'");
  }
  sg.robot = scn_.robot_index(scn_.canonical(args[0]));
  if (sg.robot < 0) throw Error("unknown robot '" + args[0] + "'");
  sg.object = scn_.object_index(scn_.canonical(args[1]));
  if (sg.object < 0) throw Error("unknown object '" + args[1] + "'");

  if (!sg.is_put) {
    sg.target = st_.objects[size_t(sg.object)];
    return sg;
  }
  std::string dst = scn_.canonical(args[2]);
  sg.site = scn_.site_index(dst);
  if (sg.site < 0) {
    int dobj = scn_.object_index(dst);
    if (dobj < 0) throw Error("unknown destination '" + args[2] + "'");
    if (st_.placed_site[size_t(dobj)] < 0)
      throw Error("destination '" + dst + "' is not on any stack yet");
    sg.site = st_.placed_site[size_t(dobj)];
  }
  sg.layer = st_.stack_count[size_t(sg.site)];
  sg.target = scene::stack_target(scn_, sg.site, sg.layer);
  return sg;
}

std::vector<double> Env::encoded_state() const {
  return scene::encode_state(scn_, st_.arms, st_.objects, st_.pulse);
}

}  // namespace env
