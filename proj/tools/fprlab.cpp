#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fpr/config.hpp"
#include "fpr/errors.hpp"
#include "fpr/gradcheck_suite.hpp"
#include "fpr/report.hpp"

namespace fs = std::filesystem;
using namespace fpr;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_override;
  std::int64_t seed_override = -1;
  int jobs_override = -1;
};

ExperimentConfig resolve_config(const CommonFlags& flags) {
  ExperimentConfig cfg =
      flags.config_path.empty() ? default_config() : load_config(flags.config_path);
  if (flags.seed_override >= 0) {
    cfg.seed = static_cast<std::uint64_t>(flags.seed_override);
    cfg.canonical["seed"] = cfg.seed;
  }
  if (!flags.out_override.empty()) cfg.out_dir = flags.out_override;
  if (flags.jobs_override >= 0) cfg.jobs = flags.jobs_override;
  return cfg;
}

std::string zoo_dir(const ExperimentConfig& cfg) {
  return (fs::path(cfg.out_dir) / "zoo").string();
}

std::string reports_dir(const ExperimentConfig& cfg) {
  return (fs::path(cfg.out_dir) / "reports").string();
}

int cmd_train(const CommonFlags& flags) {
  ExperimentConfig cfg = resolve_config(flags);
  const std::string digest = config_digest(cfg);
  std::printf("generating dataset (%zu classes x %zu)\n", cfg.dataset.classes,
              cfg.dataset.per_class);
  ToyDataset data = generate_dataset(cfg.dataset);
  std::printf("training %zu models (floor %.0f%%)\n", cfg.zoo.archs.size(),
              100.0 * cfg.zoo.accuracy_floor);
  ModelZoo zoo = train_zoo(cfg.zoo, data, cfg.seed, cfg.jobs);
  save_zoo(zoo, zoo_dir(cfg), digest);
  for (const auto& e : zoo.entries) {
    std::printf("  %-10s %-6s test accuracy %.1f%% (%zu epochs)\n", e.name.c_str(),
                e.model->kind().c_str(), 100.0 * e.test_accuracy, e.curve.size());
  }
  std::printf("zoo written to %s (digest %s)\n", zoo_dir(cfg).c_str(), digest.c_str());
  return 0;
}

void write_adversarial(const ExperimentConfig& cfg, const std::string& plan,
                       const TransferReport& report, const ToyDataset& data,
                       const std::string& digest) {
  for (std::size_t seed = 0; seed < report.adversarial.size(); ++seed) {
    Container c;
    c.kind = "adversarial";
    c.meta = {{"plan", plan}, {"seed", seed}, {"digest", digest}, {"surrogate", cfg.surrogate}};
    const auto& advs = report.adversarial[seed];
    const auto& idx = report.attack_indices[seed];
    ArrayEntry images{"images",
                      {advs.size(), cfg.dataset.channels, cfg.dataset.image_size,
                       cfg.dataset.image_size},
                      {}};
    for (const auto& img : advs) images.data.insert(images.data.end(), img.begin(), img.end());
    c.arrays.push_back(std::move(images));
    ArrayEntry indices{"indices", {idx.size()}, {}};
    for (std::size_t s : idx) indices.data.push_back(static_cast<double>(s));
    c.arrays.push_back(std::move(indices));
    ArrayEntry labels{"labels", {idx.size()}, {}};
    for (std::size_t s : idx) labels.data.push_back(static_cast<double>(data.labels[s]));
    c.arrays.push_back(std::move(labels));
    const std::string path = (fs::path(reports_dir(cfg)) /
                              ("adv_" + plan + "_seed" + std::to_string(seed) + ".fprc"))
                                 .string();
    write_container(path, c);
  }
}

int cmd_attack(const CommonFlags& flags) {
  ExperimentConfig cfg = resolve_config(flags);
  const std::string digest = config_digest(cfg);
  ToyDataset data = generate_dataset(cfg.dataset);
  ModelZoo zoo = load_zoo(zoo_dir(cfg));
  fs::create_directories(reports_dir(cfg));
  EvalOptions opts = eval_options(cfg);
  opts.keep_adversarial = true;

  for (const std::string& plan_name : cfg.eval_plans) {
    const RefinementPlan& plan = cfg.plans.at(plan_name);
    std::printf("plan %-10s ", plan_name.c_str());
    std::fflush(stdout);
    TransferReport report =
        evaluate_transfer(zoo, cfg.surrogate, cfg.targets, cfg.attack, plan, data, opts);
    report.digest = digest;
    const fs::path dir(reports_dir(cfg));
    write_transfer_csv((dir / ("transfer_" + plan_name + ".csv")).string(), report);
    write_trace_json((dir / ("trace_" + plan_name + ".json")).string(), report);
    write_adversarial(cfg, plan_name, report, data, digest);
    std::printf("mean transfer ASR %.1f%% (linf excess %.2e)\n", report.mean_transfer_asr(),
                report.max_linf_excess);
  }

  if (!cfg.stat_plans.empty()) {
    // One block set for every plan so the CSV rows are comparable: the first
    // configured stats plan that carries an AMD index set, else all blocks.
    std::vector<std::size_t> stat_blocks;
    for (const std::string& plan_name : cfg.stat_plans) {
      const RefinementPlan& p = cfg.plans.at(plan_name);
      if (p.amd && !p.amd->index_set.empty()) {
        stat_blocks = p.amd->index_set;
        break;
      }
    }
    std::FILE* f = std::fopen(
        (fs::path(reports_dir(cfg)) / "gradient_stats.csv").string().c_str(), "w");
    if (!f) throw std::runtime_error("attack: cannot write gradient_stats.csv");
    std::fprintf(f, "plan,mean_attn_grad,images,iterations,digest\n");
    for (const std::string& plan_name : cfg.stat_plans) {
      GradientStats stats =
          gradient_statistics(zoo, cfg.surrogate, cfg.attack, cfg.plans.at(plan_name), data,
                              cfg.stat_images, stat_blocks, cfg.seed, cfg.jobs);
      std::fprintf(f, "%s,%.12e,%zu,%d,%s\n", plan_name.c_str(), stats.stat_mean, stats.images,
                   stats.iterations, digest.c_str());
      std::printf("gradstats %-10s mean |dL/dA| = %.3e\n", plan_name.c_str(), stats.stat_mean);
    }
    std::fclose(f);
  }
  return 0;
}

int cmd_gradcheck(const CommonFlags& flags) {
  ExperimentConfig cfg = resolve_config(flags);
  auto report = run_gradcheck_suite(default_gradcheck_suite(cfg.seed, 20));
  for (const auto& o : report.outcomes) {
    std::printf("%-34s max err %.3e  tol %.0e  %s\n", o.name.c_str(), o.max_err, o.tolerance,
                o.pass ? "pass" : "FAIL");
  }
  std::printf("%s\n", report.all_pass ? "all gradient checks passed" : "gradient checks FAILED");
  return report.all_pass ? 0 : 1;
}

int cmd_report(const CommonFlags& flags, const std::string& dir_arg, bool allow_mixed) {
  ExperimentConfig cfg = resolve_config(flags);
  const std::string dir = dir_arg.empty() ? reports_dir(cfg) : dir_arg;
  std::vector<std::string> csvs;
  if (!fs::is_directory(dir)) throw ConfigError("report: '" + dir + "' is not a directory");
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.path().extension() == ".csv" && name.rfind("transfer_", 0) == 0) {
      csvs.push_back(entry.path().string());
    }
    if (entry.path().extension() == ".csv" && name.rfind("sweep_", 0) == 0) {
      csvs.push_back(entry.path().string());
    }
  }
  std::sort(csvs.begin(), csvs.end());
  if (csvs.empty()) throw ConfigError("report: no transfer_*.csv or sweep_*.csv in '" + dir + "'");
  MergedReport merged = merge_reports(csvs, allow_mixed);
  write_merged_csv((fs::path(dir) / "merged.csv").string(), merged);
  const std::string table = render_table(merged);
  std::FILE* f = std::fopen((fs::path(dir) / "table.txt").string().c_str(), "w");
  if (f) {
    std::fputs(table.c_str(), f);
    std::fclose(f);
  }
  std::fputs(table.c_str(), stdout);
  return 0;
}

int cmd_sweep(const CommonFlags& flags) {
  ExperimentConfig cfg = resolve_config(flags);
  const std::string digest = config_digest(cfg);
  ToyDataset data = generate_dataset(cfg.dataset);
  ModelZoo zoo = load_zoo(zoo_dir(cfg));
  fs::create_directories(reports_dir(cfg));
  const std::vector<SweepPoint> points = expand_sweep(cfg);
  EvalOptions opts = eval_options(cfg);
  std::vector<TransferReport> reports =
      ablation_sweep(zoo, cfg.surrogate, cfg.targets, cfg.attack, points, data, opts);
  for (std::size_t i = 0; i < points.size(); ++i) {
    reports[i].digest = digest;
    for (auto& cell : reports[i].cells) cell.plan = points[i].label;
    const std::string path =
        (fs::path(reports_dir(cfg)) / ("sweep_" + points[i].label + ".csv")).string();
    write_transfer_csv(path, reports[i]);
    std::printf("%-40s mean transfer ASR %.1f%%\n", points[i].label.c_str(),
                reports[i].mean_transfer_asr());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forward-refinement adversarial transfer lab"};
  app.require_subcommand(1);

  CommonFlags flags;
  app.add_option("--config", flags.config_path, "Experiment config JSON (defaults built in)");
  app.add_option("--seed", flags.seed_override, "Override the global seed");
  app.add_option("--jobs", flags.jobs_override, "Worker threads (0 = hardware)");
  app.add_option("--out", flags.out_override, "Override the output directory");

  auto* train = app.add_subcommand("train", "Generate the dataset and train the model zoo");
  auto* attack = app.add_subcommand("attack", "Run the configured attack plans and write reports");
  auto* gradcheck = app.add_subcommand("gradcheck", "Run the finite-difference oracle suite");
  std::string report_dir;
  bool allow_mixed = false;
  auto* report = app.add_subcommand("report", "Merge report CSVs into tables");
  report->add_option("dir", report_dir, "Directory of transfer_*.csv files");
  report->add_flag("--allow-mixed-digests", allow_mixed, "Merge despite differing config digests");
  auto* sweep = app.add_subcommand("sweep", "Run the configured parameter sweep");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(flags);
    if (attack->parsed()) return cmd_attack(flags);
    if (gradcheck->parsed()) return cmd_gradcheck(flags);
    if (report->parsed()) return cmd_report(flags, report_dir, allow_mixed);
    if (sweep->parsed()) return cmd_sweep(flags);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
