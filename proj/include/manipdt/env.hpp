#pragma once
#include <stdexcept>
#include <string>
#include <vector>

#include "manipdt/scene.hpp"

// Kinematic two-arm environment: point grippers with a magnet-style attach,
// axis-aligned workspace boxes, a per-step displacement cap, and a pairwise
// clearance rule. All dynamics are deterministic.
namespace env {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct Params {
  double eps = 0.1;        // attach / completion radius, inclusive
  double delta_max = 0.08; // per-step displacement cap
  double d_min = 0.05;     // minimum inter-arm distance
};

// One plan step turned into a numeric target for the active arm.
struct Subgoal {
  std::string label;   // e.g. "put david bread_slice1 cutting_board"
  int robot = -1;
  int object = -1;
  bool is_put = false;
  int site = -1;       // PUT only
  int layer = -1;      // PUT only: 0-based layer the object will occupy
  scene::Vec3 target;
};

struct State {
  std::vector<scene::Vec3> arms;
  std::vector<scene::Vec3> objects;
  std::vector<int> held_by;       // per object: robot index or -1
  std::vector<int> placed_site;   // per object: site index or -1
  std::vector<int> placed_layer;  // per object: layer or -1
  std::vector<int> stack_count;   // per site: items placed so far
  bool pulse = false;             // a subgoal advance happened just before this state
};

struct StepResult {
  bool attached = false;    // attach fired on this step
  bool placed = false;      // placement fired on this step
  bool done = false;        // active arm within eps of target and side effect holds
  double active_dist = 0.0; // post-step distance of the active arm to the target
};

class Env {
 public:
  Env(scene::Scene scn, Params p);

  void reset();
  const scene::Scene& scn() const { return scn_; }
  const Params& params() const { return p_; }
  const State& state() const { return st_; }

  // Project proposed per-arm displacements onto the feasible set: clamp the
  // target into the workspace box, cap the displacement norm, then shrink
  // moves (later-indexed arm first) until the arms keep their clearance.
  // Idempotent: project(project(d)) == project(d).
  std::vector<scene::Vec3> project(const std::vector<scene::Vec3>& deltas) const;
  bool feasible(const std::vector<scene::Vec3>& deltas) const;

  // Apply projected displacements, drag held objects along, then fire the
  // subgoal's attach / place side effect if its trigger condition holds.
  StepResult step(const std::vector<scene::Vec3>& deltas, const Subgoal& sg);

  // Drivers mark the state that begins a fresh subgoal; step() clears it.
  void set_pulse(bool v) { st_.pulse = v; }

  // Numeric target for a plan step given the current stack state. PICK aims
  // at the object; PUT aims one layer above the destination's stack top.
  Subgoal make_subgoal(const std::string& verb, const std::vector<std::string>& args) const;

  std::vector<double> encoded_state() const;

 private:
  scene::Scene scn_;
  Params p_;
  State st_;
};

}  // namespace env
