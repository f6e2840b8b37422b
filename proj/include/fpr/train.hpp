#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "fpr/dataset.hpp"
#include "fpr/models.hpp"

namespace fpr {

struct OptimizerSpec {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t batch = 32;
  int max_epochs = 30;
  // Stop once accuracy on a fixed train subset reaches this level.
  double early_stop_accuracy = 0.985;
  std::size_t eval_subset = 1000;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::vector<EpochStats> curve)
      : std::runtime_error(what), curve(std::move(curve)) {}
  std::vector<EpochStats> curve;
};

struct TrainResult {
  std::unique_ptr<Model> model;
  std::vector<EpochStats> curve;
  double test_accuracy = 0.0;
};

// Adam on minibatches. Per-sample gradients land in index-addressed slots
// and reduce in sample order, so the result is identical for any `jobs`.
// Loss turning non-finite raises TrainingError with the curve so far.
TrainResult train_model(const nlohmann::json& arch, const ToyDataset& data,
                        const OptimizerSpec& opt, std::uint64_t seed, int jobs = 0);

double evaluate_accuracy(const Model& model, const ToyDataset& data,
                         const std::vector<std::size_t>& indices, int jobs = 0);

struct ZooSpec {
  std::vector<nlohmann::json> archs;
  OptimizerSpec optimizer;
  double accuracy_floor = 0.8;  // transfer is meaningless against weak targets
};

struct ZooEntry {
  std::string name;
  std::shared_ptr<Model> model;
  double test_accuracy = 0.0;
  std::vector<EpochStats> curve;
};

struct ModelZoo {
  std::vector<ZooEntry> entries;
  const ZooEntry& by_name(const std::string& name) const;  // ConfigError if absent
  bool has(const std::string& name) const;
};

// Trains every arch; any model below the floor raises TrainingError naming
// the model and its accuracy.
ModelZoo train_zoo(const ZooSpec& spec, const ToyDataset& data, std::uint64_t seed, int jobs = 0);

// zoo directory layout: manifest.json + <name>.fprc per model
void save_zoo(const ModelZoo& zoo, const std::string& dir, const std::string& digest);
ModelZoo load_zoo(const std::string& dir);

}  // namespace fpr
