#include "fpr/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fpr/errors.hpp"
#include "fpr/ops.hpp"
#include "fpr/parallel.hpp"
#include "fpr/rng.hpp"

namespace fpr {

namespace {

std::size_t flat_param_count(const std::vector<Tensor>& params) {
  std::size_t n = 0;
  for (const Tensor& p : params) n += p.size();
  return n;
}

}  // namespace

double evaluate_accuracy(const Model& model, const ToyDataset& data,
                         const std::vector<std::size_t>& indices, int jobs) {
  if (indices.empty()) return 0.0;
  const Shape shape = data.image_shape();
  std::vector<char> correct(indices.size(), 0);
  parallel_for(indices.size(), jobs, [&](std::size_t i) {
    const std::size_t s = indices[i];
    correct[i] = model.predict(data.images[s], shape) == data.labels[s] ? 1 : 0;
  });
  std::size_t hits = 0;
  for (char c : correct) hits += c;
  return static_cast<double>(hits) / static_cast<double>(indices.size());
}

TrainResult train_model(const nlohmann::json& arch, const ToyDataset& data,
                        const OptimizerSpec& opt, std::uint64_t seed, int jobs) {
  std::unique_ptr<Model> model = make_model(arch, seed);
  model->set_requires_grad(true);
  const std::vector<Tensor> params = model->parameters();
  const std::size_t flat_n = flat_param_count(params);
  const Shape img_shape = data.image_shape();

  // Per-worker clones keep per-sample backward passes isolated; values sync
  // from the master once per batch.
  const int workers = effective_jobs(jobs);
  std::vector<std::unique_ptr<Model>> clones;
  std::vector<std::vector<Tensor>> clone_params;
  for (int w = 0; w < workers; ++w) {
    clones.push_back(model->clone());
    clones.back()->set_requires_grad(true);
    clone_params.push_back(clones.back()->parameters());
  }

  std::vector<double> m(flat_n, 0.0), v(flat_n, 0.0);
  std::vector<std::size_t> order = data.train_indices;
  RngStream shuffle_rng(mix_key(seed, 0x747261696eULL));

  // Fixed subset for the early-stop accuracy probe, evaluated on a grad-free
  // clone so probe forwards never build tape.
  std::vector<std::size_t> probe = data.train_indices;
  if (probe.size() > opt.eval_subset) probe.resize(opt.eval_subset);
  std::unique_ptr<Model> probe_model = model->clone();
  probe_model->set_requires_grad(false);
  const std::vector<Tensor> probe_params = probe_model->parameters();

  TrainResult result;
  std::size_t adam_step = 0;
  for (int epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      std::swap(order[i], order[i + shuffle_rng.next_below(order.size() - i)]);
    }

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch) {
      const std::size_t bsz = std::min(opt.batch, order.size() - start);
      std::vector<std::vector<double>> slot(bsz);
      std::vector<double> losses(bsz, 0.0);

      const std::size_t chunk = (bsz + workers - 1) / workers;
      parallel_for(static_cast<std::size_t>(workers), workers, [&](std::size_t w) {
        const std::size_t lo = w * chunk, hi = std::min(bsz, lo + chunk);
        if (lo >= hi) return;
        Model& worker_model = *clones[w];
        const auto& wparams = clone_params[w];
        for (std::size_t p = 0; p < wparams.size(); ++p) {
          Tensor t = wparams[p];
          t.values() = params[p].values();
        }
        for (std::size_t b = lo; b < hi; ++b) {
          const std::size_t s = order[start + b];
          for (Tensor t : wparams) t.zero_grad();
          Tensor x = Tensor::from(img_shape, data.images[s]);
          Tensor loss = cross_entropy(worker_model.forward(x),
                                      static_cast<std::size_t>(data.labels[s]));
          backward(loss);
          losses[b] = loss.item();
          std::vector<double>& g = slot[b];
          g.reserve(flat_n);
          for (const Tensor& t : wparams) {
            if (t.has_grad()) {
              g.insert(g.end(), t.grad().begin(), t.grad().end());
            } else {
              g.insert(g.end(), t.size(), 0.0);
            }
          }
        }
      });

      // Reduce in sample order, then one Adam step on the master weights.
      std::vector<double> grad(flat_n, 0.0);
      for (std::size_t b = 0; b < bsz; ++b) {
        loss_sum += losses[b];
        ++loss_count;
        for (std::size_t i = 0; i < flat_n; ++i) grad[i] += slot[b][i];
      }
      const double inv_b = 1.0 / static_cast<double>(bsz);
      ++adam_step;
      const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(adam_step));
      const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(adam_step));
      std::size_t off = 0;
      for (Tensor p : params) {
        std::vector<double>& w = p.values();
        for (std::size_t i = 0; i < w.size(); ++i) {
          const double g = grad[off + i] * inv_b;
          m[off + i] = opt.beta1 * m[off + i] + (1.0 - opt.beta1) * g;
          v[off + i] = opt.beta2 * v[off + i] + (1.0 - opt.beta2) * g * g;
          w[i] -= opt.lr * (m[off + i] / bc1) / (std::sqrt(v[off + i] / bc2) + opt.eps);
        }
        off += w.size();
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_count == 0 ? 0.0 : loss_sum / static_cast<double>(loss_count);
    if (!std::isfinite(stats.mean_loss)) {
      throw TrainingError("training diverged (non-finite loss) for '" +
                              arch.value("name", std::string("model")) + "' at epoch " +
                              std::to_string(epoch),
                          result.curve);
    }
    for (std::size_t p = 0; p < probe_params.size(); ++p) {
      Tensor t = probe_params[p];
      t.values() = params[p].values();
    }
    stats.train_accuracy = evaluate_accuracy(*probe_model, data, probe, jobs);
    result.curve.push_back(stats);
    if (stats.train_accuracy >= opt.early_stop_accuracy) break;
  }

  model->set_requires_grad(false);
  result.test_accuracy = evaluate_accuracy(*model, data, data.test_indices, jobs);
  result.model = std::move(model);
  return result;
}

const ZooEntry& ModelZoo::by_name(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e;
  }
  throw ConfigError("zoo: no model named '" + name + "'");
}

bool ModelZoo::has(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return true;
  }
  return false;
}

ModelZoo train_zoo(const ZooSpec& spec, const ToyDataset& data, std::uint64_t seed, int jobs) {
  if (spec.archs.empty()) throw ConfigError("zoo: no architectures configured");
  ModelZoo zoo;
  for (const auto& arch : spec.archs) {
    const std::string name = arch.value("name", arch.value("kind", std::string("model")));
    TrainResult r = train_model(arch, data, spec.optimizer, mix_key(seed, fnv1a64(name)), jobs);
    if (r.test_accuracy < spec.accuracy_floor) {
      std::string curve;
      for (const auto& e : r.curve) {
        curve += " epoch " + std::to_string(e.epoch) + ": acc " +
                 std::to_string(e.train_accuracy) + ", loss " + std::to_string(e.mean_loss) + ";";
      }
      throw TrainingError("zoo: model '" + name + "' reached test accuracy " +
                              std::to_string(r.test_accuracy) + " below floor " +
                              std::to_string(spec.accuracy_floor) + ". curve:" + curve,
                          r.curve);
    }
    ZooEntry entry;
    entry.name = name;
    entry.model = std::move(r.model);
    entry.test_accuracy = r.test_accuracy;
    entry.curve = std::move(r.curve);
    zoo.entries.push_back(std::move(entry));
  }
  return zoo;
}

void save_zoo(const ModelZoo& zoo, const std::string& dir, const std::string& digest) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["digest"] = digest;
  auto models = nlohmann::json::array();
  for (const auto& e : zoo.entries) {
    const std::string file = e.name + ".fprc";
    save_model(*e.model, (std::filesystem::path(dir) / file).string());
    auto curve = nlohmann::json::array();
    for (const auto& s : e.curve) {
      curve.push_back({{"epoch", s.epoch},
                       {"mean_loss", s.mean_loss},
                       {"train_accuracy", s.train_accuracy}});
    }
    models.push_back({{"name", e.name},
                      {"file", file},
                      {"kind", e.model->kind()},
                      {"test_accuracy", e.test_accuracy},
                      {"curve", curve}});
  }
  manifest["models"] = std::move(models);
  std::ofstream f(std::filesystem::path(dir) / "manifest.json");
  f << manifest.dump(2) << "\n";
  if (!f) throw std::runtime_error("zoo: failed writing manifest in '" + dir + "'");
}

ModelZoo load_zoo(const std::string& dir) {
  const auto manifest_path = std::filesystem::path(dir) / "manifest.json";
  std::ifstream f(manifest_path);
  if (!f) {
    throw ConfigError("zoo: missing '" + manifest_path.string() + "'; run the train command first");
  }
  nlohmann::json manifest = nlohmann::json::parse(f);
  ModelZoo zoo;
  for (const auto& m : manifest.at("models")) {
    ZooEntry entry;
    entry.name = m.at("name").get<std::string>();
    entry.test_accuracy = m.at("test_accuracy").get<double>();
    entry.model = load_model((std::filesystem::path(dir) / m.at("file").get<std::string>()).string());
    for (const auto& s : m.value("curve", nlohmann::json::array())) {
      entry.curve.push_back({s.value("epoch", 0), s.value("mean_loss", 0.0),
                             s.value("train_accuracy", 0.0)});
    }
    zoo.entries.push_back(std::move(entry));
  }
  return zoo;
}

}  // namespace fpr
