#include "manipdt/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "manipdt/config.hpp"
#include "manipdt/gcdt.hpp"
#include "manipdt/jsonio.hpp"
#include "manipdt/nn.hpp"
#include "manipdt/pddl.hpp"
#include "manipdt/planner.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cli {
namespace {

struct Options {
  std::string config;
  std::string out = ".";
  uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;  // 0 keeps the library default

  // plan
  std::string domain, problem, llm_url, mock_file, context_file;
  // artifact io
  std::string data_path, checkpoint;
  bool trace = false;
  int ft_steps = 0;
  double ft_lr = 0;
};

std::string basename_of(const std::string& path) {
  size_t slash = path.rfind('/');
  return slash == std::string::npos ? path : path.substr(slash + 1);
}

std::string join_args(const planner::PlanStep& s) {
  std::string out = s.verb;
  for (const std::string& a : s.args) out += " " + a;
  return out;
}

// Everything make_plan needs, with paths already resolved: config-relative
// paths against the config directory, flag paths against the cwd.
struct PlanInputs {
  std::string domain, problem;
  config::PlannerMode mode = config::PlannerMode::Internal;
  std::string url, transcript, context;
  planner::AliasMap aliases;
};

PlanInputs plan_inputs(const config::Loaded* loaded, const Options& o) {
  PlanInputs in;
  if (loaded) {
    const config::ExperimentConfig& c = loaded->cfg;
    in.domain = config::resolve_path(loaded->base_dir, c.files.domain);
    in.problem = config::resolve_path(loaded->base_dir, c.files.problem);
    in.mode = c.planner.mode;
    in.url = c.planner.url;
    in.transcript = config::resolve_path(loaded->base_dir, c.planner.transcript);
    in.context = c.planner.context.empty()
                     ? std::string()
                     : config::resolve_path(loaded->base_dir, c.planner.context);
    in.aliases = loaded->scene.aliases;
  }
  if (!o.domain.empty()) in.domain = o.domain;
  if (!o.problem.empty()) in.problem = o.problem;
  if (!o.llm_url.empty()) {
    in.mode = config::PlannerMode::Llm;
    in.url = o.llm_url;
  } else if (!o.mock_file.empty()) {
    in.mode = config::PlannerMode::Mock;
    in.transcript = o.mock_file;
  }
  if (!o.context_file.empty()) in.context = o.context_file;

  if (in.domain.empty())
    throw config::Error("files.domain", "needed: pass --domain or a config with [files]");
  if (in.problem.empty())
    throw config::Error("files.problem", "needed: pass --problem or a config with [files]");
  if (!jsonio::file_exists(in.domain))
    throw config::Error("files.domain", "file not found: " + in.domain);
  if (!jsonio::file_exists(in.problem))
    throw config::Error("files.problem", "file not found: " + in.problem);
  if (in.mode == config::PlannerMode::Mock && !jsonio::file_exists(in.transcript))
    throw config::Error("planner.transcript", "file not found: " + in.transcript);
  if (!in.context.empty() && !jsonio::file_exists(in.context))
    throw config::Error("planner.context", "file not found: " + in.context);
  return in;
}

planner::HttpEndpoint parse_url(const std::string& url) {
  const std::string scheme = "http://";
  const std::string usage = "expected http://host[:port][/path], got '" + url + "'";
  if (url.rfind(scheme, 0) != 0) throw config::Error("planner.url", usage);
  std::string rest = url.substr(scheme.size());
  size_t slash = rest.find('/');
  std::string hostport = rest.substr(0, slash);
  std::string path = slash == std::string::npos ? "/complete" : rest.substr(slash);
  size_t colon = hostport.find(':');
  std::string host = hostport.substr(0, colon);
  int port = 80;
  if (colon != std::string::npos) {
    try {
      port = std::stoi(hostport.substr(colon + 1));
    } catch (const std::exception&) {
      throw config::Error("planner.url", usage);
    }
  }
  if (host.empty()) throw config::Error("planner.url", usage);
  return planner::HttpEndpoint(host, port, path);
}

struct PlanOut {
  std::vector<planner::PlanStep> steps;
  std::string text;
};

PlanOut make_plan(const PlanInputs& in) {
  std::string domain_text = jsonio::read_file(in.domain);
  std::string problem_text = jsonio::read_file(in.problem);
  pddl::Domain dom = pddl::parse_domain(domain_text);
  pddl::Problem prob = pddl::parse_problem(problem_text, dom);
  pddl::GroundTask task = pddl::ground(dom, prob);

  PlanOut po;
  if (in.mode == config::PlannerMode::Internal) {
    po.text = planner::format_plan(task, planner::plan_optimal(task));
  } else {
    std::string context = in.context.empty() ? std::string() : jsonio::read_file(in.context);
    planner::ReplanOutcome outcome;
    if (in.mode == config::PlannerMode::Mock) {
      planner::MockEndpoint ep = planner::MockEndpoint::from_file(in.transcript);
      outcome = planner::llm_plan(task, ep, context, domain_text, problem_text, in.aliases);
    } else {
      planner::HttpEndpoint ep = parse_url(in.url);
      outcome = planner::llm_plan(task, ep, context, domain_text, problem_text, in.aliases);
    }
    if (!outcome.valid)
      throw planner::Error(planner::Error::Kind::ExhaustedAttempts,
                           "no valid plan after " + std::to_string(outcome.attempts_used) +
                               " attempts: " + outcome.final_reason);
    po.text = planner::format_plan(task, planner::Plan{outcome.plan});
  }
  po.steps = planner::parse_plan_text(po.text);
  return po;
}

void check_dims(const gcdt::ModelConfig& mc, int state_dim, int action_dim,
                const std::string& what) {
  if (mc.state_dim != state_dim || mc.action_dim != action_dim)
    throw gcdt::Error(what + " dimensions (state " + std::to_string(state_dim) + ", action " +
                      std::to_string(action_dim) + ") do not match the model (state " +
                      std::to_string(mc.state_dim) + ", action " +
                      std::to_string(mc.action_dim) + ")");
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// ---- subcommands ----

int cmd_plan(const config::Loaded* loaded, const Options& o, std::ostream& out) {
  out << make_plan(plan_inputs(loaded, o)).text;
  return 0;
}

int cmd_gendata(const config::Loaded& loaded, const Options& o, std::ostream& out) {
  const config::ExperimentConfig& c = loaded.cfg;
  PlanOut po = make_plan(plan_inputs(&loaded, o));
  traj::Dataset ds =
      traj::build_dataset(loaded.scene, basename_of(c.files.scene), loaded.scene_text, po.steps,
                          config::expert_params(c), c.data.episodes, c.seed);
  ds.header.config_hash = config::config_hash(c);
  std::filesystem::create_directories(o.out);
  std::string path = o.out + "/dataset.jsonl";
  traj::save_dataset(ds, path);
  out << "dataset: " << path << " (" << ds.episodes.size() << " episodes of "
      << ds.episodes.front().steps() << " steps)\n";
  return 0;
}

int cmd_train(const config::Loaded& loaded, const Options& o, std::ostream& out) {
  const config::ExperimentConfig& c = loaded.cfg;
  std::string data = o.data_path.empty() ? o.out + "/dataset.jsonl" : o.data_path;
  traj::Dataset ds = traj::load_dataset(data);
  check_dims(c.model, ds.header.state_dim, ds.header.action_dim, "dataset");
  gcdt::Model<float> model(c.model, c.train.seed);
  gcdt::TrainStats stats = gcdt::train(model, gcdt::episode_ptrs(ds), c.train);
  std::filesystem::create_directories(o.out);
  std::string path = o.out + "/model.ckpt";
  model.save(path, {{"config_hash", config::config_hash(c)}});
  out << "checkpoint: " << path << " (" << c.train.steps << " steps, final loss "
      << jsonio::fmt_double(stats.losses.back()) << ")\n";
  return 0;
}

int cmd_finetune(const config::Loaded& loaded, const Options& o, std::ostream& out) {
  const config::ExperimentConfig& c = loaded.cfg;
  std::string data = o.data_path.empty() ? o.out + "/dataset.jsonl" : o.data_path;
  traj::Dataset ds = traj::load_dataset(data);
  gcdt::Model<float> model = gcdt::Model<float>::load(o.checkpoint);
  check_dims(model.cfg(), ds.header.state_dim, ds.header.action_dim, "dataset");
  gcdt::TrainConfig tc = c.train;
  if (o.ft_steps > 0) tc.steps = o.ft_steps;
  if (o.ft_lr > 0) tc.lr = o.ft_lr;
  gcdt::TrainStats stats = gcdt::train(model, gcdt::episode_ptrs(ds), tc);
  std::filesystem::create_directories(o.out);
  std::string path = o.out + "/model.ckpt";
  model.save(path, {{"config_hash", config::config_hash(c)}});
  out << "checkpoint: " << path << " (" << tc.steps << " steps, final loss "
      << jsonio::fmt_double(stats.losses.back()) << ")\n";
  return 0;
}

int cmd_eval(const config::Loaded& loaded, const Options& o, std::ostream& out) {
  const config::ExperimentConfig& c = loaded.cfg;
  std::string ckpt = o.checkpoint.empty() ? o.out + "/model.ckpt" : o.checkpoint;
  gcdt::Model<float> model = gcdt::Model<float>::load(ckpt);
  check_dims(model.cfg(), loaded.scene.state_dim(), loaded.scene.action_dim(), "scene");
  PlanOut po = make_plan(plan_inputs(&loaded, o));
  gcdt::EvalReport report = gcdt::evaluate(model, loaded.scene, po.steps, config::eval_params(c));

  out << "episodes         " << c.eval.episodes << "\n";
  out << "subgoal_success  " << fmt4(report.subgoal_success) << "\n";
  out << "episode_success  " << fmt4(report.episode_success) << "\n";
  out << "mean_length      " << fmt4(report.mean_length) << "\n";

  jsonio::Writer w;
  w.raw("{\"config_hash\":");
  w.str(config::config_hash(c));
  w.raw(",\"checkpoint_hash\":");
  w.str(jsonio::hex64(jsonio::fnv1a64(jsonio::read_file(ckpt))));
  w.raw(",\"episodes\":");
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
  w.raw(",\"subgoal_success\":");
  w.num(report.subgoal_success);
  w.raw(",\"episode_success\":");
  w.num(report.episode_success);
  w.raw(",\"mean_length\":");
  w.num(report.mean_length);
  w.raw(",\"runs\":[");
  for (size_t i = 0; i < report.runs.size(); ++i) {
    const gcdt::RolloutResult& r = report.runs[i];
    if (i) w.raw(",");
    w.raw("{\"subgoals\":[");
    for (size_t s = 0; s < r.subgoals.size(); ++s) {
      if (s) w.raw(",");
      w.raw("{\"label\":");
      w.str(r.subgoals[s].label);
      w.raw(",\"ok\":");
      w.boolean(r.subgoals[s].success);
      w.raw(",\"steps\":");
      w.num(int64_t(r.subgoals[s].steps));
      w.raw("}");
    }
    w.raw("],\"steps\":");
    w.num(int64_t(r.total_steps));
    w.raw(",\"success\":");
    w.boolean(r.episode_success);
    w.raw(",\"rate\":");
    w.num(r.subgoal_rate);
    w.raw("}");
  }
  w.raw("]}\n");
  std::filesystem::create_directories(o.out);
  std::string path = o.out + "/eval.json";
  jsonio::write_file(path, w.out);
  out << "report: " << path << "\n";
  return 0;
}

int cmd_rollout(const config::Loaded& loaded, const Options& o, std::ostream& out) {
  const config::ExperimentConfig& c = loaded.cfg;
  std::string ckpt = o.checkpoint.empty() ? o.out + "/model.ckpt" : o.checkpoint;
  gcdt::Model<float> model = gcdt::Model<float>::load(ckpt);
  check_dims(model.cfg(), loaded.scene.state_dim(), loaded.scene.action_dim(), "scene");
  PlanOut po = make_plan(plan_inputs(&loaded, o));

  env::Env sim(loaded.scene, c.env);
  std::vector<gcdt::TraceStep> trace;
  gcdt::RolloutResult r = gcdt::rollout(model, sim, po.steps, config::rollout_params(c),
                                        o.trace ? &trace : nullptr);
  if (o.trace) {
    jsonio::Writer w;
    w.raw("{\"config_hash\":");
    w.str(config::config_hash(c));
    w.raw(",\"plan\":[");
    for (size_t i = 0; i < po.steps.size(); ++i) {
      if (i) w.raw(",");
      w.str(join_args(po.steps[i]));
    }
    w.raw("]}\n");
    for (const gcdt::TraceStep& ts : trace) {
      w.raw("{\"t\":");
      w.num(int64_t(ts.t));
      w.raw(",\"subgoal\":");
      w.num(int64_t(ts.subgoal));
      w.raw(",\"rtg\":");
      w.num(ts.rtg);
      w.raw(",\"action\":");
      w.arr(ts.action);
      w.raw(",\"dist\":");
      w.num(ts.dist);
      w.raw(",\"done\":");
      w.boolean(ts.done);
      w.raw("}\n");
    }
    std::filesystem::create_directories(o.out);
    std::string path = o.out + "/trace.jsonl";
    jsonio::write_file(path, w.out);
    out << "trace: " << path << "\n";
  }
  int ok = 0;
  for (const gcdt::SubgoalOutcome& s : r.subgoals) ok += s.success ? 1 : 0;
  out << "subgoals " << ok << "/" << r.subgoals.size() << ", steps " << r.total_steps << ", "
      << (r.episode_success ? "success" : "failure") << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"symbolic plans driving a small decision transformer for two-arm stacking",
               "manipdt"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", o.config, "experiment config file (TOML or JSON)");
  CLI::Option* seed_opt = app.add_option("--seed", o.seed, "override every seed in the config");
  app.add_option("--out", o.out, "output directory for artifacts")->capture_default_str();
  app.add_option("--threads", o.threads, "worker threads; 1 forces the serial kernels");

  CLI::App* plan = app.add_subcommand("plan", "print a plan for the configured task");
  plan->add_option("--domain", o.domain, "PDDL domain file (overrides the config)");
  plan->add_option("--problem", o.problem, "PDDL problem file (overrides the config)");
  CLI::Option* llm_opt =
      plan->add_option("--llm", o.llm_url, "plan via an HTTP completion endpoint");
  CLI::Option* mock_opt =
      plan->add_option("--mock", o.mock_file, "plan via a scripted transcript file");
  plan->add_option("--context", o.context_file, "context file prepended to endpoint prompts");
  llm_opt->excludes(mock_opt);

  CLI::App* gen = app.add_subcommand("gen-data", "generate expert demonstrations");

  CLI::App* train = app.add_subcommand("train", "train a policy on a dataset");
  train->add_option("--data", o.data_path, "dataset path (default OUT/dataset.jsonl)");

  CLI::App* finetune =
      app.add_subcommand("finetune", "continue training a checkpoint on new data");
  finetune->add_option("--checkpoint", o.checkpoint, "base checkpoint")->required();
  finetune->add_option("--data", o.data_path, "dataset path (default OUT/dataset.jsonl)");
  finetune->add_option("--steps", o.ft_steps, "override train.steps for this run");
  finetune->add_option("--lr", o.ft_lr, "override train.lr for this run");

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint on the seeded eval distribution");
  eval_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint (default OUT/model.ckpt)");

  CLI::App* rollout =
      app.add_subcommand("rollout", "run one episode on the exact scene");
  rollout->add_option("--checkpoint", o.checkpoint, "checkpoint (default OUT/model.ckpt)");
  rollout->add_flag("--trace", o.trace, "write OUT/trace.jsonl with per-step records");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  o.seed_set = seed_opt->count() > 0;

  if (o.threads == 1) {
    nn::kernels::set_parallel(false);
  } else if (o.threads > 1) {
    nn::kernels::set_parallel(true);
#ifdef _OPENMP
    omp_set_num_threads(o.threads);
#endif
  }

  try {
    config::Loaded loaded;
    bool has_config = !o.config.empty();
    if (has_config) {
      loaded = config::load_config(o.config);
      if (o.seed_set) {
        loaded.cfg.seed = o.seed;
        loaded.cfg.train.seed = o.seed;
        loaded.cfg.eval.seed = o.seed;
      }
    }
    if (app.got_subcommand(plan)) return cmd_plan(has_config ? &loaded : nullptr, o, out);
    if (!has_config)
      throw config::Error("", "--config is required for this subcommand");
    if (app.got_subcommand(gen)) return cmd_gendata(loaded, o, out);
    if (app.got_subcommand(train)) return cmd_train(loaded, o, out);
    if (app.got_subcommand(finetune)) return cmd_finetune(loaded, o, out);
    if (app.got_subcommand(eval_cmd)) return cmd_eval(loaded, o, out);
    if (app.got_subcommand(rollout)) return cmd_rollout(loaded, o, out);
    err << "usage: no subcommand given\n";
    return 2;
  } catch (const config::Error& e) {
    err << "config: " << e.what() << "\n";
    return 2;
  } catch (const pddl::Error& e) {
    err << "pddl: " << e.what() << "\n";
    return 1;
  } catch (const planner::Error& e) {
    err << "planner: " << e.what() << "\n";
    return 1;
  } catch (const scene::Error& e) {
    err << "scene: " << e.what() << "\n";
    return 1;
  } catch (const env::Error& e) {
    err << "env: " << e.what() << "\n";
    return 1;
  } catch (const reward::Error& e) {
    err << "reward: " << e.what() << "\n";
    return 1;
  } catch (const traj::Error& e) {
    err << "traj: " << e.what() << "\n";
    return 1;
  } catch (const nn::Error& e) {
    err << "nn: " << e.what() << "\n";
    return 1;
  } catch (const gcdt::Error& e) {
    err << "gcdt: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace cli
