#include "fpr/config.hpp"

#include <fstream>
#include <set>

#include "fpr/errors.hpp"
#include "fpr/rng.hpp"

namespace fpr {

namespace {

template <typename T>
T field(const nlohmann::json& j, const std::string& key, const T& fallback,
        const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: field '" + where + "." + key + "' has the wrong type");
  }
}

// Recursive overlay merge: objects merge key-by-key, everything else is
// replaced by the child value.
nlohmann::json merge_json(const nlohmann::json& base, const nlohmann::json& overlay) {
  if (!base.is_object() || !overlay.is_object()) return overlay;
  nlohmann::json out = base;
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    if (out.contains(it.key())) {
      out[it.key()] = merge_json(out.at(it.key()), it.value());
    } else {
      out[it.key()] = it.value();
    }
  }
  return out;
}

nlohmann::json resolve_plan_json(const std::string& name, const nlohmann::json& plans,
                                 std::set<std::string>& visiting) {
  if (!plans.contains(name)) throw ConfigError("config: plans." + name + " is not defined");
  if (!visiting.insert(name).second) {
    throw ConfigError("config: plans." + name + " has a circular 'extends' chain");
  }
  nlohmann::json plan = plans.at(name);
  if (plan.contains("extends")) {
    const std::string parent = plan.at("extends").get<std::string>();
    nlohmann::json base = resolve_plan_json(parent, plans, visiting);
    plan.erase("extends");
    plan = merge_json(base, plan);
  }
  visiting.erase(name);
  return plan;
}

std::vector<std::size_t> index_set_from_json(const nlohmann::json& j, const std::string& where,
                                             std::size_t* random_count) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s.rfind("random:", 0) == 0) {
      if (!random_count) throw ConfigError("config: '" + where + "' cannot be random here");
      *random_count = std::stoul(s.substr(7));
      return {};
    }
    throw ConfigError("config: '" + where + "' must be an index array or \"random:k\"");
  }
  try {
    return j.get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: '" + where + "' must be an array of block indices");
  }
}

}  // namespace

RefinementPlan plan_from_json(const std::string& name, const nlohmann::json& j) {
  RefinementPlan plan;
  plan.name = name;
  const std::string where = "plans." + name;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    if (key != "amd" && key != "mte" && key != "dropout" && key != "gradient_cut" &&
        key != "block_drop") {
      throw ConfigError("config: unknown field '" + where + "." + key + "'");
    }
  }
  if (j.contains("amd")) {
    const nlohmann::json& a = j.at("amd");
    AmdConfig amd;
    if (a.contains("index_set")) {
      amd.index_set = index_set_from_json(a.at("index_set"), where + ".amd.index_set",
                                          &amd.random_count);
    }
    amd.diversity = field(a, "d", amd.diversity, where + ".amd");
    amd.rng_seed = field(a, "rng_seed", amd.rng_seed, where + ".amd");
    plan.amd = amd;
  }
  if (j.contains("mte")) {
    const nlohmann::json& m = j.at("mte");
    MteConfig mte;
    mte.scale = field(m, "s", mte.scale, where + ".mte");
    mte.attenuation = field(m, "eta", mte.attenuation, where + ".mte");
    plan.mte = mte;
  }
  if (j.contains("dropout")) {
    const nlohmann::json& d = j.at("dropout");
    DropoutConfig drop;
    if (d.contains("index_set")) {
      drop.index_set = index_set_from_json(d.at("index_set"), where + ".dropout.index_set", nullptr);
    }
    drop.rate = field(d, "rate", drop.rate, where + ".dropout");
    plan.dropout = drop;
  }
  plan.gradient_cut = field(j, "gradient_cut", false, where);
  if (j.contains("block_drop")) {
    const nlohmann::json& b = j.at("block_drop");
    BlockDropConfig drop;
    if (b.contains("indices")) {
      drop.indices = index_set_from_json(b.at("indices"), where + ".block_drop.indices", nullptr);
    }
    drop.random_count = field<std::size_t>(b, "random_count", 0, where + ".block_drop");
    plan.block_drop = drop;
  }
  return plan;
}

nlohmann::json default_config_json() {
  return nlohmann::json{
      {"seed", 7},
      {"out_dir", "runs/out"},
      {"jobs", 0},
      {"dataset",
       {{"classes", 10},
        {"per_class", 600},
        {"image_size", 20},
        {"channels", 3},
        {"contrast_lo", 0.5},
        {"contrast_hi", 1.0},
        {"max_shift", 2.0},
        {"tint", 0.1},
        {"noise", 0.08},
        {"train_fraction", 5.0 / 6.0},
        {"seed", 1},
        {"split_seed", 2}}},
      {"zoo",
       {{"accuracy_floor", 0.8},
        {"optimizer",
         {{"lr", 1e-3},
          {"batch", 32},
          {"max_epochs", 30},
          {"early_stop_accuracy", 0.985}}},
        {"models",
         {{{"name", "vit_s"},
           {"kind", "vit"},
           {"patch", 2},
           {"blocks", 4},
           {"embed_dim", 32},
           {"heads", 2},
           {"mlp_hidden", 64},
           {"qk_init_std", 0.6}},
          {{"name", "vit_d6"},
           {"kind", "vit"},
           {"patch", 2},
           {"blocks", 6},
           {"embed_dim", 32},
           {"heads", 2},
           {"mlp_hidden", 64},
           {"qk_init_std", 0.6}},
          {{"name", "vit_w48"},
           {"kind", "vit"},
           {"patch", 2},
           {"blocks", 3},
           {"embed_dim", 48},
           {"heads", 3},
           {"mlp_hidden", 96},
           {"qk_init_std", 0.6}},
          {{"name", "mixer_s"}, {"kind", "mixer"}, {"patch", 2}},
          {{"name", "conv_s"}, {"kind", "conv"}}}}}},
      {"attack",
       {{"epsilon", 16.0 / 255.0},
        {"step_size", 1.6 / 255.0},
        {"iterations", 10},
        {"momentum", 1.0}}},
      {"plans",
       {{"mim", nlohmann::json::object()},
        {"amd", {{"amd", {{"index_set", {0, 1, 3}}, {"d", 25.0}}}}},
        {"mte", {{"mte", {{"s", 0.8}, {"eta", 0.3}}}}},
        {"dropout", {{"dropout", {{"index_set", {0, 1, 3}}, {"rate", 0.2}}}}},
        {"fpr", {{"extends", "amd"}, {"mte", {{"s", 0.8}, {"eta", 0.3}}}}},
        {"cut", {{"gradient_cut", true}}},
        {"drop1", {{"block_drop", {{"random_count", 1}}}}},
        {"dropall", {{"block_drop", {{"indices", {0, 1, 2, 3}}}}}}}},
      {"eval",
       {{"surrogate", "vit_s"},
        {"targets", {"vit_s", "vit_d6", "vit_w48", "mixer_s", "conv_s"}},
        {"plans", {"mim", "dropout", "amd", "mte", "fpr"}},
        {"images", 200},
        {"seeds", 5}}},
      {"stats", {{"images", 100}, {"plans", {"mim", "amd", "cut", "fpr"}}}},
      {"sweep",
       {{"plan", "fpr"}, {"grid", {{"amd.d", {0.0, 5.0, 25.0, 100.0}}}}}}};
}

ExperimentConfig config_from_json(const nlohmann::json& raw) {
  if (!raw.is_object()) throw ConfigError("config: top level must be a JSON object");
  const nlohmann::json j = merge_json(default_config_json(), raw);
  ExperimentConfig cfg;
  cfg.canonical = j;
  cfg.seed = field<std::uint64_t>(j, "seed", 7, "");
  cfg.out_dir = field<std::string>(j, "out_dir", "runs/out", "");
  cfg.jobs = field(j, "jobs", 0, "");

  const nlohmann::json& d = j.at("dataset");
  cfg.dataset.classes = field<std::size_t>(d, "classes", 10, "dataset");
  cfg.dataset.per_class = field<std::size_t>(d, "per_class", 600, "dataset");
  cfg.dataset.image_size = field<std::size_t>(d, "image_size", 16, "dataset");
  cfg.dataset.channels = field<std::size_t>(d, "channels", 3, "dataset");
  cfg.dataset.contrast_lo = field(d, "contrast_lo", 0.5, "dataset");
  cfg.dataset.contrast_hi = field(d, "contrast_hi", 1.0, "dataset");
  cfg.dataset.max_shift = field(d, "max_shift", 2.0, "dataset");
  cfg.dataset.tint = field(d, "tint", 0.1, "dataset");
  cfg.dataset.noise = field(d, "noise", 0.08, "dataset");
  cfg.dataset.train_fraction = field(d, "train_fraction", 5.0 / 6.0, "dataset");
  cfg.dataset.seed = field<std::uint64_t>(d, "seed", 1, "dataset");
  cfg.dataset.split_seed = field<std::uint64_t>(d, "split_seed", 2, "dataset");
  cfg.dataset.validate();

  const nlohmann::json& z = j.at("zoo");
  cfg.zoo.accuracy_floor = field(z, "accuracy_floor", 0.8, "zoo");
  const nlohmann::json& opt = z.at("optimizer");
  cfg.zoo.optimizer.lr = field(opt, "lr", 1e-3, "zoo.optimizer");
  cfg.zoo.optimizer.batch = field<std::size_t>(opt, "batch", 32, "zoo.optimizer");
  cfg.zoo.optimizer.max_epochs = field(opt, "max_epochs", 30, "zoo.optimizer");
  cfg.zoo.optimizer.early_stop_accuracy =
      field(opt, "early_stop_accuracy", 0.985, "zoo.optimizer");
  if (!z.contains("models") || !z.at("models").is_array() || z.at("models").empty()) {
    throw ConfigError("config: 'zoo.models' must be a non-empty array");
  }
  for (const auto& m : z.at("models")) {
    nlohmann::json arch = m;
    if (!arch.contains("kind")) throw ConfigError("config: every zoo model needs a 'kind'");
    // Image geometry follows the dataset unless overridden per model.
    if (!arch.contains("image_size")) arch["image_size"] = cfg.dataset.image_size;
    if (!arch.contains("channels")) arch["channels"] = cfg.dataset.channels;
    if (!arch.contains("classes")) arch["classes"] = cfg.dataset.classes;
    cfg.zoo.archs.push_back(std::move(arch));
  }

  const nlohmann::json& a = j.at("attack");
  cfg.attack.epsilon = field(a, "epsilon", 16.0 / 255.0, "attack");
  cfg.attack.step_size = field(a, "step_size", 1.6 / 255.0, "attack");
  cfg.attack.iterations = field(a, "iterations", 10, "attack");
  cfg.attack.momentum_decay = field(a, "momentum", 1.0, "attack");
  cfg.attack.pixel_lo = field(a, "pixel_lo", 0.0, "attack");
  cfg.attack.pixel_hi = field(a, "pixel_hi", 1.0, "attack");
  cfg.attack.validate();

  const nlohmann::json& plans = j.at("plans");
  for (auto it = plans.begin(); it != plans.end(); ++it) {
    std::set<std::string> visiting;
    cfg.plans[it.key()] = plan_from_json(it.key(), resolve_plan_json(it.key(), plans, visiting));
  }

  const nlohmann::json& e = j.at("eval");
  cfg.surrogate = field<std::string>(e, "surrogate", "vit_s", "eval");
  cfg.targets = field<std::vector<std::string>>(e, "targets", {}, "eval");
  cfg.eval_plans = field<std::vector<std::string>>(e, "plans", {}, "eval");
  cfg.eval_images = field<std::size_t>(e, "images", 200, "eval");
  cfg.eval_seeds = field(e, "seeds", 5, "eval");
  if (cfg.targets.empty()) throw ConfigError("config: 'eval.targets' must not be empty");
  for (const auto& plan : cfg.eval_plans) {
    if (!cfg.plans.count(plan)) {
      throw ConfigError("config: 'eval.plans' references undefined plan '" + plan + "'");
    }
  }

  const nlohmann::json& st = j.at("stats");
  cfg.stat_images = field<std::size_t>(st, "images", 100, "stats");
  cfg.stat_plans = field<std::vector<std::string>>(st, "plans", {}, "stats");
  for (const auto& plan : cfg.stat_plans) {
    if (!cfg.plans.count(plan)) {
      throw ConfigError("config: 'stats.plans' references undefined plan '" + plan + "'");
    }
  }

  const nlohmann::json& sw = j.at("sweep");
  cfg.sweep_plan = field<std::string>(sw, "plan", "", "sweep");
  if (sw.contains("grid")) {
    if (!sw.at("grid").is_object()) throw ConfigError("config: 'sweep.grid' must be an object");
    for (auto it = sw.at("grid").begin(); it != sw.at("grid").end(); ++it) {
      if (!it.value().is_array() || it.value().empty()) {
        throw ConfigError("config: 'sweep.grid." + it.key() + "' must be a non-empty array");
      }
      cfg.sweep_grid.emplace_back(it.key(), it.value());
    }
  }
  if (!cfg.sweep_plan.empty() && !cfg.plans.count(cfg.sweep_plan)) {
    throw ConfigError("config: 'sweep.plan' references undefined plan '" + cfg.sweep_plan + "'");
  }
  return cfg;
}

ExperimentConfig default_config() { return config_from_json(nlohmann::json::object()); }

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string config_digest(const ExperimentConfig& cfg) {
  const std::uint64_t h = fnv1a64(cfg.canonical.dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<SweepPoint> expand_sweep(const ExperimentConfig& cfg) {
  if (cfg.sweep_plan.empty()) throw ConfigError("config: 'sweep.plan' is not set");
  if (cfg.sweep_grid.empty()) throw ConfigError("config: 'sweep.grid' is empty");
  const nlohmann::json& plans = cfg.canonical.at("plans");
  std::set<std::string> visiting;
  const nlohmann::json base = resolve_plan_json(cfg.sweep_plan, plans, visiting);

  std::vector<std::pair<std::string, nlohmann::json>> points = {{cfg.sweep_plan, base}};
  for (const auto& [path, values] : cfg.sweep_grid) {
    std::vector<std::pair<std::string, nlohmann::json>> next;
    for (const auto& [label, plan_json] : points) {
      for (const auto& value : values) {
        nlohmann::json overlaid = plan_json;
        // Apply dotted path onto the plan JSON.
        nlohmann::json* node = &overlaid;
        std::string rest = path;
        while (true) {
          const auto dot = rest.find('.');
          if (dot == std::string::npos) break;
          node = &(*node)[rest.substr(0, dot)];
          rest = rest.substr(dot + 1);
        }
        (*node)[rest] = value;
        std::string vlabel = value.is_string() ? value.get<std::string>() : value.dump();
        next.emplace_back(label + "_" + path + "=" + vlabel, std::move(overlaid));
      }
    }
    points = std::move(next);
  }

  std::vector<SweepPoint> out;
  for (const auto& [label, plan_json] : points) {
    SweepPoint p;
    p.label = label;
    p.plan = plan_from_json(label, plan_json);
    out.push_back(std::move(p));
  }
  return out;
}

EvalOptions eval_options(const ExperimentConfig& cfg) {
  EvalOptions opts;
  opts.images = cfg.eval_images;
  opts.seeds = cfg.eval_seeds;
  opts.jobs = cfg.jobs;
  opts.global_seed = cfg.seed;
  return opts;
}

}  // namespace fpr
