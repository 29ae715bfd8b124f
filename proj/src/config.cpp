#include "manipdt/config.hpp"

#include <cctype>
#include <cstdlib>
#include <set>

#include "json.hpp"
#include "manipdt/jsonio.hpp"

namespace config {
namespace {

using nlohmann::json;

// ---- TOML subset ----
// Line-oriented: [tables], dotted keys, strings with basic escapes, integers,
// floats, booleans, single-line arrays of scalars, # comments. Enough for the
// configs this project ships; anything outside the subset is a loud error.

struct TomlError {
  int line;
  std::string msg;
};

bool ident_ok(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  return true;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_dotted(const std::string& key, int line) {
  std::vector<std::string> parts;
  size_t start = 0;
  while (true) {
    size_t dot = key.find('.', start);
    std::string part = trim(key.substr(start, dot - start));
    if (!ident_ok(part)) throw TomlError{line, "bad key '" + key + "'"};
    parts.push_back(part);
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return parts;
}

// cut at the first # that is not inside a string
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (size_t i = 0; i < s.size(); ++i) {
    if (in_str) {
      if (s[i] == '\\') ++i;
      else if (s[i] == '"') in_str = false;
    } else if (s[i] == '"') {
      in_str = true;
    } else if (s[i] == '#') {
      return s.substr(0, i);
    }
  }
  return s;
}

json parse_scalar(const std::string& raw, int line);

json parse_string(const std::string& raw, int line) {
  std::string out;
  size_t i = 1;
  for (; i < raw.size(); ++i) {
    char c = raw[i];
    if (c == '"') break;
    if (c == '\\') {
      if (++i == raw.size()) throw TomlError{line, "unterminated escape"};
      switch (raw[i]) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        default: throw TomlError{line, std::string("unknown escape \\") + raw[i]};
      }
    } else {
      out += c;
    }
  }
  if (i >= raw.size()) throw TomlError{line, "unterminated string"};
  if (trim(raw.substr(i + 1)) != "") throw TomlError{line, "trailing text after string"};
  return json(out);
}

json parse_array(const std::string& raw, int line) {
  if (raw.back() != ']') throw TomlError{line, "unterminated array"};
  std::string body = raw.substr(1, raw.size() - 2);
  json arr = json::array();
  // split on commas outside strings
  std::string cur;
  bool in_str = false;
  auto flush = [&] {
    std::string item = trim(cur);
    if (item.empty()) throw TomlError{line, "empty array element"};
    arr.push_back(parse_scalar(item, line));
    cur.clear();
  };
  for (size_t i = 0; i < body.size(); ++i) {
    char c = body[i];
    if (in_str) {
      cur += c;
      if (c == '\\' && i + 1 < body.size()) cur += body[++i];
      else if (c == '"') in_str = false;
    } else if (c == '"') {
      cur += c;
      in_str = true;
    } else if (c == ',') {
      flush();
    } else {
      cur += c;
    }
  }
  if (trim(cur) != "") flush();
  else if (!arr.empty()) throw TomlError{line, "trailing comma in array"};
  return arr;
}

json parse_scalar(const std::string& raw, int line) {
  if (raw[0] == '"') return parse_string(raw, line);
  if (raw[0] == '[') return parse_array(raw, line);
  if (raw == "true") return json(true);
  if (raw == "false") return json(false);
  bool integral = true;
  for (size_t i = 0; i < raw.size(); ++i) {
    char c = raw[i];
    if (i == 0 && (c == '+' || c == '-')) continue;
    if (!std::isdigit(static_cast<unsigned char>(c))) integral = false;
  }
  if (integral && raw != "+" && raw != "-") {
    errno = 0;
    char* end = nullptr;
    long long v = std::strtoll(raw.c_str(), &end, 10);
    if (errno != 0 || end != raw.c_str() + raw.size())
      throw TomlError{line, "integer out of range '" + raw + "'"};
    return json(int64_t(v));
  }
  char* end = nullptr;
  double v = std::strtod(raw.c_str(), &end);
  if (end != raw.c_str() + raw.size() || raw.empty())
    throw TomlError{line, "cannot parse value '" + raw + "'"};
  return json(v);
}

json parse_toml(const std::string& text) {
  json root = json::object();
  std::vector<std::string> table;
  int line = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    std::string rawline = text.substr(pos, nl == std::string::npos ? nl : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line;
    std::string s = trim(strip_comment(rawline));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw TomlError{line, "unterminated table header"};
      table = split_dotted(s.substr(1, s.size() - 2), line);
      continue;
    }
    // key = value, with the '=' outside any string
    size_t eq = std::string::npos;
    for (size_t i = 0; i < s.size() && eq == std::string::npos; ++i) {
      if (s[i] == '"') break;  // keys in this subset are bare
      if (s[i] == '=') eq = i;
    }
    if (eq == std::string::npos) throw TomlError{line, "expected key = value"};
    std::vector<std::string> key = split_dotted(s.substr(0, eq), line);
    std::string value = trim(s.substr(eq + 1));
    if (value.empty()) throw TomlError{line, "missing value"};
    json* node = &root;
    for (const std::string& t : table) node = &(*node)[t];
    for (size_t i = 0; i + 1 < key.size(); ++i) node = &(*node)[key[i]];
    if (node->contains(key.back())) {
      std::string full;
      for (const std::string& t : table) full += t + ".";
      for (const std::string& k : key) full += k + ".";
      full.pop_back();
      throw TomlError{line, "duplicate key '" + full + "'"};
    }
    (*node)[key.back()] = parse_scalar(value, line);
  }
  return root;
}

// ---- tree -> ExperimentConfig ----

// Typed, defaulted reads off one table with unknown-key rejection.
struct Section {
  const json* j;  // null when the table is absent (all defaults)
  std::string path;
  std::set<std::string> used;

  bool has(const std::string& key) {
    used.insert(key);
    return j && j->contains(key);
  }
  std::string where(const std::string& key) const {
    return path.empty() ? key : path + "." + key;
  }
  const json& at(const std::string& key) { return (*j)[key]; }

  std::string str(const std::string& key, const std::string& dflt) {
    if (!has(key)) return dflt;
    if (!at(key).is_string()) throw Error(where(key), "expected a string");
    return at(key).get<std::string>();
  }
  int64_t integer(const std::string& key, int64_t dflt) {
    if (!has(key)) return dflt;
    if (!at(key).is_number_integer()) throw Error(where(key), "expected an integer");
    return at(key).get<int64_t>();
  }
  double number(const std::string& key, double dflt) {
    if (!has(key)) return dflt;
    if (!at(key).is_number()) throw Error(where(key), "expected a number");
    return at(key).get<double>();
  }
  bool boolean(const std::string& key, bool dflt) {
    if (!has(key)) return dflt;
    if (!at(key).is_boolean()) throw Error(where(key), "expected a boolean");
    return at(key).get<bool>();
  }
  std::vector<int> int_array(const std::string& key) {
    std::vector<int> out;
    if (!has(key)) return out;
    if (!at(key).is_array()) throw Error(where(key), "expected an array");
    for (const auto& e : at(key)) {
      if (!e.is_number_integer()) throw Error(where(key), "expected integer elements");
      out.push_back(e.get<int>());
    }
    return out;
  }
  // call after every known key was asked for
  void finish() {
    if (!j) return;
    for (const auto& item : j->items())
      if (!used.count(item.key())) throw Error(where(item.key()), "unknown key");
  }
};

Section section(const json& root, const std::string& name, std::set<std::string>& top_used) {
  top_used.insert(name);
  if (!root.contains(name)) return Section{nullptr, name, {}};
  if (!root[name].is_object()) throw Error(name, "expected a table");
  return Section{&root[name], name, {}};
}

void require_file(const std::string& field, const std::string& base_dir,
                  const std::string& path) {
  if (path.empty()) throw Error(field, "missing required path");
  std::string full = resolve_path(base_dir, path);
  if (!jsonio::file_exists(full)) throw Error(field, "file not found: " + full);
}

ExperimentConfig map_tree(const json& root, const std::string& base_dir) {
  if (!root.is_object()) throw Error("", "config root must be a table");
  std::set<std::string> top_used;
  ExperimentConfig c;

  {
    Section top{&root, "", {}};
    c.seed = uint64_t(top.integer("seed", 0));
    top_used.insert("seed");
  }

  Section files = section(root, "files", top_used);
  c.files.scene = files.str("scene", "");
  c.files.domain = files.str("domain", "");
  c.files.problem = files.str("problem", "");
  files.finish();

  Section planner = section(root, "planner", top_used);
  std::string mode = planner.str("mode", "internal");
  if (mode == "internal") c.planner.mode = PlannerMode::Internal;
  else if (mode == "llm") c.planner.mode = PlannerMode::Llm;
  else if (mode == "mock") c.planner.mode = PlannerMode::Mock;
  else throw Error("planner.mode", "expected internal, llm or mock, got '" + mode + "'");
  c.planner.url = planner.str("url", "");
  c.planner.transcript = planner.str("transcript", "");
  c.planner.context = planner.str("context", "");
  planner.finish();

  Section rew = section(root, "reward", top_used);
  c.reward.alpha = rew.number("alpha", c.reward.alpha);
  c.reward.beta = rew.number("beta", c.reward.beta);
  c.reward.n = int(rew.integer("n", c.reward.n));
  c.reward.h = int(rew.integer("h", c.reward.h));
  rew.finish();

  Section envs = section(root, "env", top_used);
  c.env.eps = envs.number("eps", c.env.eps);
  c.env.delta_max = envs.number("delta_max", c.env.delta_max);
  c.env.d_min = envs.number("d_min", c.env.d_min);
  envs.finish();

  Section model = section(root, "model", top_used);
  c.model.d_model = int(model.integer("d_model", c.model.d_model));
  c.model.n_layers = int(model.integer("n_layers", c.model.n_layers));
  c.model.n_heads = int(model.integer("n_heads", c.model.n_heads));
  c.model.context = int(model.integer("context", c.model.context));
  c.model.max_timestep = int(model.integer("max_timestep", c.model.max_timestep));
  c.model.dropout = model.number("dropout", c.model.dropout);
  c.model.action_scale = model.number("action_scale", c.model.action_scale);
  c.model.use_goal = model.boolean("use_goal", c.model.use_goal);
  model.finish();

  Section data = section(root, "data", top_used);
  c.data.episodes = int(data.integer("episodes", c.data.episodes));
  c.data.jitter = data.number("jitter", c.data.jitter);
  c.data.start_jitter = data.number("start_jitter", c.data.start_jitter);
  data.finish();

  Section train = section(root, "train", top_used);
  c.train.steps = int(train.integer("steps", c.train.steps));
  c.train.batch = int(train.integer("batch", c.train.batch));
  c.train.lr = train.number("lr", c.train.lr);
  c.train.weight_decay = train.number("weight_decay", c.train.weight_decay);
  c.train.grad_clip = train.number("grad_clip", c.train.grad_clip);
  c.train.seed = uint64_t(train.integer("seed", int64_t(c.seed)));
  train.finish();

  Section eval = section(root, "eval", top_used);
  c.eval.episodes = int(eval.integer("episodes", c.eval.episodes));
  c.eval.seed = uint64_t(eval.integer("seed", int64_t(c.seed)));
  c.eval.start_jitter = eval.number("start_jitter", c.eval.start_jitter);
  c.eval.moved_items = eval.int_array("moved_items");
  c.eval.move_dist = eval.number("move_dist", c.eval.move_dist);
  eval.finish();

  for (const auto& item : root.items())
    if (!top_used.count(item.key())) throw Error(item.key(), "unknown key");

  // invariants that don't need the scene
  if (c.reward.alpha <= 0) throw Error("reward.alpha", "must be positive");
  if (c.reward.beta < 0) throw Error("reward.beta", "must be >= 0");
  if (c.reward.n < 1) throw Error("reward.n", "must be >= 1");
  if (c.reward.h < c.reward.n || c.reward.h % c.reward.n != 0)
    throw Error("reward.h", "must be a positive multiple of reward.n");
  if (c.env.eps <= 0) throw Error("env.eps", "must be positive");
  if (c.env.delta_max <= 0) throw Error("env.delta_max", "must be positive");
  if (c.env.d_min < 0) throw Error("env.d_min", "must be >= 0");
  if (c.model.d_model < 1) throw Error("model.d_model", "must be >= 1");
  if (c.model.n_layers < 1) throw Error("model.n_layers", "must be >= 1");
  if (c.model.n_heads < 1 || c.model.d_model % c.model.n_heads != 0)
    throw Error("model.n_heads", "must divide model.d_model");
  if (c.model.context < 1) throw Error("model.context", "must be >= 1");
  if (c.model.max_timestep < 1) throw Error("model.max_timestep", "must be >= 1");
  if (c.model.dropout < 0 || c.model.dropout >= 1)
    throw Error("model.dropout", "must be in [0, 1)");
  if (c.model.action_scale <= 0) throw Error("model.action_scale", "must be positive");
  if (c.data.episodes < 1) throw Error("data.episodes", "must be >= 1");
  if (c.data.jitter < 0) throw Error("data.jitter", "must be >= 0");
  if (c.data.start_jitter < 0) throw Error("data.start_jitter", "must be >= 0");
  if (c.train.steps < 1) throw Error("train.steps", "must be >= 1");
  if (c.train.batch < 1) throw Error("train.batch", "must be >= 1");
  if (c.train.lr <= 0) throw Error("train.lr", "must be positive");
  if (c.train.weight_decay < 0) throw Error("train.weight_decay", "must be >= 0");
  if (c.train.grad_clip < 0) throw Error("train.grad_clip", "must be >= 0");
  if (c.eval.episodes < 1) throw Error("eval.episodes", "must be >= 1");
  if (c.eval.start_jitter < 0) throw Error("eval.start_jitter", "must be >= 0");
  if (c.eval.move_dist < 0) throw Error("eval.move_dist", "must be >= 0");

  if (c.planner.mode == PlannerMode::Mock)
    require_file("planner.transcript", base_dir, c.planner.transcript);
  if (c.planner.mode == PlannerMode::Llm && c.planner.url.empty()) {
    const char* env_url = std::getenv("MANIPDT_LLM_URL");
    if (env_url && *env_url) c.planner.url = env_url;
    else throw Error("planner.url", "llm mode needs a url (or MANIPDT_LLM_URL)");
  }
  if (!c.planner.context.empty())
    require_file("planner.context", base_dir, c.planner.context);

  require_file("files.scene", base_dir, c.files.scene);
  require_file("files.domain", base_dir, c.files.domain);
  require_file("files.problem", base_dir, c.files.problem);
  return c;
}

}  // namespace

std::string resolve_path(const std::string& base_dir, const std::string& path) {
  if (path.empty() || path.front() == '/' || base_dir.empty()) return path;
  return base_dir + "/" + path;
}

Loaded parse_config(const std::string& text, const std::string& format,
                    const std::string& base_dir) {
  json root;
  if (format == "json") {
    try {
      root = json::parse(text);
    } catch (const json::exception& e) {
      throw Error("", std::string("bad JSON: ") + e.what());
    }
  } else if (format == "toml") {
    try {
      root = parse_toml(text);
    } catch (const TomlError& e) {
      throw Error("", "line " + std::to_string(e.line) + ": " + e.msg);
    }
  } else {
    throw Error("", "unknown config format '" + format + "'");
  }

  Loaded out;
  out.base_dir = base_dir;
  out.cfg = map_tree(root, base_dir);
  out.scene_text = jsonio::read_file(resolve_path(base_dir, out.cfg.files.scene));
  try {
    out.scene = scene::parse_scene(out.scene_text);
  } catch (const std::exception& e) {
    throw Error("files.scene", e.what());
  }
  out.cfg.model.state_dim = out.scene.state_dim();
  out.cfg.model.action_dim = out.scene.action_dim();
  for (int idx : out.cfg.eval.moved_items)
    if (idx < 0 || idx >= out.scene.num_objects())
      throw Error("eval.moved_items",
                  "object index " + std::to_string(idx) + " out of range");
  return out;
}

Loaded load_config(const std::string& path) {
  if (!jsonio::file_exists(path)) throw Error("", "config file not found: " + path);
  std::string text = jsonio::read_file(path);
  size_t dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  size_t slash = path.rfind('/');
  std::string dir = slash == std::string::npos ? "." : path.substr(0, slash);
  return parse_config(text, ext == "json" ? "json" : "toml", dir);
}

std::string resolved_json(const ExperimentConfig& c) {
  jsonio::Writer w;
  w.raw("{\"seed\":");
  w.num(int64_t(c.seed));
  w.raw(",\"files\":{\"scene\":");
  w.str(c.files.scene);
  w.raw(",\"domain\":");
  w.str(c.files.domain);
  w.raw(",\"problem\":");
  w.str(c.files.problem);
  w.raw("},\"planner\":{\"mode\":");
  w.str(c.planner.mode == PlannerMode::Internal ? "internal"
        : c.planner.mode == PlannerMode::Llm    ? "llm"
                                                : "mock");
  w.raw(",\"url\":");
  w.str(c.planner.url);
  w.raw(",\"transcript\":");
  w.str(c.planner.transcript);
  w.raw(",\"context\":");
  w.str(c.planner.context);
  w.raw("},\"reward\":{\"alpha\":");
  w.num(c.reward.alpha);
  w.raw(",\"beta\":");
  w.num(c.reward.beta);
  w.raw(",\"n\":");
  w.num(int64_t(c.reward.n));
  w.raw(",\"h\":");
  w.num(int64_t(c.reward.h));
  w.raw("},\"env\":{\"eps\":");
  w.num(c.env.eps);
  w.raw(",\"delta_max\":");
  w.num(c.env.delta_max);
  w.raw(",\"d_min\":");
  w.num(c.env.d_min);
  w.raw("},\"model\":");
  w.raw(gcdt::config_json(c.model));
  w.raw(",\"data\":{\"episodes\":");
  w.num(int64_t(c.data.episodes));
  w.raw(",\"jitter\":");
  w.num(c.data.jitter);
  w.raw(",\"start_jitter\":");
  w.num(c.data.start_jitter);
  w.raw("},\"train\":{\"steps\":");
  w.num(int64_t(c.train.steps));
  w.raw(",\"batch\":");
  w.num(int64_t(c.train.batch));
  w.raw(",\"lr\":");
  w.num(c.train.lr);
  w.raw(",\"weight_decay\":");
  w.num(c.train.weight_decay);
  w.raw(",\"grad_clip\":");
  w.num(c.train.grad_clip);
  w.raw(",\"seed\":");
  w.num(int64_t(c.train.seed));
  w.raw("},\"eval\":{\"episodes\":");
  w.num(int64_t(c.eval.episodes));
  w.raw(",\"seed\":");
  w.num(int64_t(c.eval.seed));
  w.raw(",\"start_jitter\":");
  w.num(c.eval.start_jitter);
  w.raw(",\"moved_items\":[");
  for (size_t i = 0; i < c.eval.moved_items.size(); ++i) {
    if (i) w.raw(",");
    w.num(int64_t(c.eval.moved_items[i]));
  }
  w.raw("],\"move_dist\":");
  w.num(c.eval.move_dist);
  w.raw("}}");
  return w.out;
}

std::string config_hash(const ExperimentConfig& c) {
  return jsonio::hex64(jsonio::fnv1a64(resolved_json(c)));
}

traj::ExpertParams expert_params(const ExperimentConfig& c) {
  traj::ExpertParams p;
  p.n = c.reward.n;
  p.alpha = c.reward.alpha;
  p.jitter = c.data.jitter;
  p.start_jitter = c.data.start_jitter;
  p.env_params = c.env;
  return p;
}

gcdt::RolloutParams rollout_params(const ExperimentConfig& c) {
  gcdt::RolloutParams rp;
  rp.n = c.reward.n;
  rp.h = c.reward.h;
  rp.alpha = c.reward.alpha;
  rp.beta = c.reward.beta;
  rp.env_params = c.env;
  return rp;
}

gcdt::EvalParams eval_params(const ExperimentConfig& c) {
  gcdt::EvalParams ep;
  ep.episodes = c.eval.episodes;
  ep.seed = c.eval.seed;
  ep.start_jitter = c.eval.start_jitter;
  ep.moved_items = c.eval.moved_items;
  ep.move_dist = c.eval.move_dist;
  ep.rp = rollout_params(c);
  return ep;
}

}  // namespace config
