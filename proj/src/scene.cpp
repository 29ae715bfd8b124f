#include "manipdt/scene.hpp"

#include "json.hpp"

#include "manipdt/jsonio.hpp"

namespace scene {

namespace {

using ojson = nlohmann::ordered_json;

Vec3 to_vec3(const ojson& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() ||
      !j[2].is_number())
    throw Error(what + " must be a [x, y, z] number triple");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

int Scene::robot_index(const std::string& name) const {
  for (size_t i = 0; i < robots.size(); ++i)
    if (robots[i].name == name) return int(i);
  return -1;
}

int Scene::object_index(const std::string& name) const {
  for (size_t i = 0; i < object_names.size(); ++i)
    if (object_names[i] == name) return int(i);
  return -1;
}

int Scene::site_index(const std::string& name) const {
  for (size_t i = 0; i < sites.size(); ++i)
    if (sites[i].name == name) return int(i);
  return -1;
}

std::string Scene::canonical(const std::string& name) const {
  auto it = aliases.find(name);
  return it == aliases.end() ? name : it->second;
}

Scene parse_scene(const std::string& json_text) {
  ojson j = ojson::parse(json_text, nullptr, false);
  if (j.is_discarded()) throw Error("scene file is not valid JSON");
  Scene s;

  if (!j.contains("robots") || !j["robots"].is_array() || j["robots"].empty())
    throw Error("scene needs a non-empty \"robots\" array");
  for (const auto& r : j["robots"]) {
    RobotSpec spec;
    if (!r.contains("name") || !r["name"].is_string()) throw Error("robot needs a \"name\"");
    spec.name = r["name"].get<std::string>();
    spec.home = to_vec3(r.at("home"), "robot home");
    if (!r.contains("workspace")) throw Error("robot '" + spec.name + "' needs a workspace box");
    spec.workspace.lo = to_vec3(r["workspace"].at("lo"), "workspace lo");
    spec.workspace.hi = to_vec3(r["workspace"].at("hi"), "workspace hi");
    if (spec.workspace.lo.x > spec.workspace.hi.x || spec.workspace.lo.y > spec.workspace.hi.y ||
        spec.workspace.lo.z > spec.workspace.hi.z)
      throw Error("robot '" + spec.name + "' workspace lo exceeds hi");
    if (!spec.workspace.contains(spec.home))
      throw Error("robot '" + spec.name + "' home lies outside its workspace");
    if (s.robot_index(spec.name) >= 0) throw Error("duplicate robot '" + spec.name + "'");
    s.robots.push_back(spec);
  }

  if (!j.contains("objects") || !j["objects"].is_object() || j["objects"].empty())
    throw Error("scene needs a non-empty \"objects\" map");
  for (const auto& [name, pos] : j["objects"].items()) {
    if (s.object_index(name) >= 0) throw Error("duplicate object '" + name + "'");
    s.object_names.push_back(name);
    s.object_start.push_back(to_vec3(pos, "object '" + name + "' position"));
  }

  if (!j.contains("stack_sites") || !j["stack_sites"].is_object() || j["stack_sites"].empty())
    throw Error("scene needs a non-empty \"stack_sites\" map");
  for (const auto& [name, pos] : j["stack_sites"].items()) {
    if (s.site_index(name) >= 0) throw Error("duplicate stack site '" + name + "'");
    if (s.object_index(name) >= 0) throw Error("'" + name + "' is both object and stack site");
    s.sites.push_back({name, to_vec3(pos, "site '" + name + "' base")});
  }

  if (j.contains("layer_height")) {
    if (!j["layer_height"].is_number() || j["layer_height"].get<double>() <= 0)
      throw Error("layer_height must be a positive number");
    s.layer_height = j["layer_height"].get<double>();
  }

  if (j.contains("aliases")) {
    if (!j["aliases"].is_object()) throw Error("aliases must be a name -> name map");
    for (const auto& [from, to] : j["aliases"].items()) {
      if (!to.is_string()) throw Error("alias '" + from + "' must map to a string");
      s.aliases[from] = to.get<std::string>();
    }
  }
  return s;
}

Scene load_scene(const std::string& path) { return parse_scene(jsonio::read_file(path)); }

std::vector<double> encode_state(const Scene& scn, const std::vector<Vec3>& arms,
                                 const std::vector<Vec3>& objects, bool subgoal_pulse) {
  if (int(arms.size()) != scn.num_robots() || int(objects.size()) != scn.num_objects())
    throw Error("encode_state: arm/object counts do not match the scene");
  std::vector<double> v;
  v.reserve(size_t(scn.state_dim()));
  for (const Vec3& a : arms) {
    v.push_back(a.x);
    v.push_back(a.y);
    v.push_back(a.z);
  }
  for (const Vec3& o : objects) {
    v.push_back(o.x);
    v.push_back(o.y);
    v.push_back(o.z);
  }
  v.push_back(subgoal_pulse ? 1.0 : 0.0);
  return v;
}

Vec3 stack_target(const Scene& scn, int site, int layer) {
  const StackSite& st = scn.sites.at(size_t(site));
  return {st.base.x, st.base.y, st.base.z + scn.layer_height * double(layer + 1)};
}

}  // namespace scene
