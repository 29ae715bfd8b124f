#pragma once
#include <stdexcept>
#include <string>
#include <vector>

#include "manipdt/env.hpp"
#include "manipdt/gcdt.hpp"
#include "manipdt/reward.hpp"
#include "manipdt/scene.hpp"
#include "manipdt/traj.hpp"

// Experiment configuration: one file (TOML subset or JSON) describing the
// whole pipeline, resolved into typed knobs plus a stable content hash that
// every produced artifact embeds.
namespace config {

struct Error : std::runtime_error {
  std::string field;  // dotted key path; empty for file-level problems
  Error(std::string field_, const std::string& msg)
      : std::runtime_error(field_.empty() ? msg : field_ + ": " + msg),
        field(std::move(field_)) {}
};

// How plans are produced: the built-in optimal search, an HTTP completion
// endpoint, or a scripted transcript standing in for one.
enum class PlannerMode { Internal, Llm, Mock };

struct FileSet {
  std::string scene;
  std::string domain;
  std::string problem;
};

struct PlannerChoice {
  PlannerMode mode = PlannerMode::Internal;
  std::string url;         // llm mode; may come from MANIPDT_LLM_URL instead
  std::string transcript;  // mock mode: replies file
  std::string context;     // optional context file prepended to prompts
};

struct DataKnobs {
  int episodes = 200;
  double jitter = 0.01;       // interior-waypoint sigma for the expert
  double start_jitter = 0.0;  // per-episode object-layout sigma
};

struct EvalKnobs {
  int episodes = 20;
  uint64_t seed = 0;
  double start_jitter = 0.01;
  std::vector<int> moved_items;
  double move_dist = 0.06;
};

struct ExperimentConfig {
  uint64_t seed = 0;  // sections without their own seed inherit this one
  FileSet files;
  PlannerChoice planner;
  reward::LedgerParams reward;  // alpha, beta, n, h
  env::Params env;              // eps, delta_max, d_min
  gcdt::ModelConfig model;      // state/action dims come from the scene
  DataKnobs data;
  gcdt::TrainConfig train;
  EvalKnobs eval;
};

// Parsed config plus everything needed to act on it. `base_dir` (the config
// file's directory) anchors the relative paths inside; the scene is parsed
// eagerly because the model dimensions come from it.
struct Loaded {
  ExperimentConfig cfg;
  scene::Scene scene;
  std::string scene_text;  // verbatim bytes, for the dataset scene hash
  std::string base_dir;
};

// `path` + base_dir when `path` is relative.
std::string resolve_path(const std::string& base_dir, const std::string& path);

// Map a parsed key/value tree onto ExperimentConfig and validate every
// invariant. `format` is "toml" or "json". Unknown keys are errors; every
// Error carries the dotted field path. Referenced files must exist.
Loaded parse_config(const std::string& text, const std::string& format,
                    const std::string& base_dir);

// Read the file and pick the format from the extension (.json -> json,
// anything else -> toml).
Loaded load_config(const std::string& path);

// Canonical JSON rendering of every resolved field, fixed key order, paths
// as written. Excludes output location and thread count: the hash names the
// experiment, not where or how fast it ran.
std::string resolved_json(const ExperimentConfig& c);

// hex fnv1a64 of resolved_json; the value artifacts embed as "config_hash".
std::string config_hash(const ExperimentConfig& c);

// Assemble per-module parameter structs from the resolved knobs.
traj::ExpertParams expert_params(const ExperimentConfig& c);
gcdt::RolloutParams rollout_params(const ExperimentConfig& c);
gcdt::EvalParams eval_params(const ExperimentConfig& c);

}  // namespace config
