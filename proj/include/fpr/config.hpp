#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "fpr/attack.hpp"
#include "fpr/dataset.hpp"
#include "fpr/evaluate.hpp"
#include "fpr/train.hpp"

namespace fpr {

// One JSON file drives everything; plans support "extends" so per-model
// profiles are one-line overlays. See README for the schema.
struct ExperimentConfig {
  std::uint64_t seed = 7;
  std::string out_dir = "runs/out";
  int jobs = 0;

  DatasetSpec dataset;
  ZooSpec zoo;
  AttackConfig attack;
  std::map<std::string, RefinementPlan> plans;

  std::string surrogate = "vit_s";
  std::vector<std::string> targets;      // evaluation targets, surrogate included for white-box
  std::vector<std::string> eval_plans;   // plans the attack command runs
  std::size_t eval_images = 200;
  int eval_seeds = 5;

  std::size_t stat_images = 100;
  std::vector<std::string> stat_plans;   // plans the gradient-statistics pass runs

  std::string sweep_plan;                                   // base plan for sweeps
  std::vector<std::pair<std::string, nlohmann::json>> sweep_grid;  // param path -> values

  nlohmann::json canonical;  // normalized config the digest is computed from
};

ExperimentConfig default_config();
nlohmann::json default_config_json();

// ConfigError messages name the offending field.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

// FNV-1a over the canonical dump; equal configs collide, any change differs.
std::string config_digest(const ExperimentConfig& cfg);

RefinementPlan plan_from_json(const std::string& name, const nlohmann::json& j);

// Cartesian product of sweep_grid applied onto the base plan.
std::vector<SweepPoint> expand_sweep(const ExperimentConfig& cfg);

EvalOptions eval_options(const ExperimentConfig& cfg);

}  // namespace fpr
