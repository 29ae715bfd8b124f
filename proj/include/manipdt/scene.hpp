#pragma once
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

// Scene description (robots, objects, stack sites) and the symbolic-to-numeric
// encoding of states and subgoals.
namespace scene {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct Vec3 {
  double x = 0, y = 0, z = 0;
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }
};

inline double dist(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

struct Box {
  Vec3 lo, hi;
  Vec3 clamp(const Vec3& p) const {
    auto cl = [](double v, double a, double b) { return v < a ? a : (v > b ? b : v); };
    return {cl(p.x, lo.x, hi.x), cl(p.y, lo.y, hi.y), cl(p.z, lo.z, hi.z)};
  }
  bool contains(const Vec3& p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z;
  }
};

struct RobotSpec {
  std::string name;
  Vec3 home;
  Box workspace;
};

struct StackSite {
  std::string name;
  Vec3 base;
};

struct Scene {
  std::vector<RobotSpec> robots;
  std::vector<std::string> object_names;  // file order fixes the state layout
  std::vector<Vec3> object_start;
  std::vector<StackSite> sites;
  double layer_height = 0.03;
  std::map<std::string, std::string> aliases;  // nickname -> canonical robot/object name

  int robot_index(const std::string& name) const;
  int object_index(const std::string& name) const;
  int site_index(const std::string& name) const;
  // alias-aware lookup used when mapping plan argument names onto the scene
  std::string canonical(const std::string& name) const;

  int num_robots() const { return int(robots.size()); }
  int num_objects() const { return int(object_names.size()); }
  // [arm positions | object positions | subgoal-completed pulse]
  int state_dim() const { return 3 * num_robots() + 3 * num_objects() + 1; }
  int action_dim() const { return 3 * num_robots(); }
};

Scene parse_scene(const std::string& json_text);
Scene load_scene(const std::string& path);

// Flat state vector in the layout fixed by the scene declaration order.
std::vector<double> encode_state(const Scene& scn, const std::vector<Vec3>& arms,
                                 const std::vector<Vec3>& objects, bool subgoal_pulse);

// The stacking target for layer `layer` (0-based) of a site: one layer height
// above the previous item, first item one layer above the base.
Vec3 stack_target(const Scene& scn, int site, int layer);

}  // namespace scene
