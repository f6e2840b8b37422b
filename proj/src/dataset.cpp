#include "fpr/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "fpr/errors.hpp"
#include "fpr/rng.hpp"

namespace fpr {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double blob(double x, double y, double cx, double cy, double sigma2) {
  const double dx = x - cx, dy = y - cy;
  return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma2));
}

// Base pattern in roughly [-1, 1]; (x, y) already carry the sample's shift.
double class_pattern(std::size_t cls, double x, double y, double n) {
  const double c = 0.5 * (n - 1.0);
  const double period = n / 2.0;
  switch (cls % 10) {
    case 0: return std::sin(kTwoPi * x / period);
    case 1: return std::sin(kTwoPi * y / period);
    case 2: return std::sin(kTwoPi * (x + y) / period);
    case 3: return std::sin(kTwoPi * (x - y) / period);
    case 4: return std::sin(kTwoPi * x / period) * std::sin(kTwoPi * y / period);
    case 5: return 2.0 * blob(x, y, c, c, 9.0) - 1.0;
    case 6: {
      const double r = std::hypot(x - c, y - c);
      return std::cos(kTwoPi * r / 6.0);
    }
    case 7: return std::tanh((x - c) / 2.0);
    case 8: return std::tanh((y - c) / 2.0);
    default: {
      const double q = n / 4.0;
      return blob(x, y, q, q, 8.0) + blob(x, y, 3 * q, 3 * q, 8.0) -
             blob(x, y, q, 3 * q, 8.0) - blob(x, y, 3 * q, q, 8.0);
    }
  }
}

}  // namespace

void DatasetSpec::validate() const {
  if (classes < 2) throw ConfigError("dataset: need at least 2 classes");
  if (per_class == 0) throw ConfigError("dataset: per_class must be positive");
  if (image_size < 4 || channels == 0) throw ConfigError("dataset: degenerate image dimensions");
  if (contrast_hi <= 0.0 || contrast_lo < 0.0 || contrast_lo > contrast_hi) {
    throw ConfigError("dataset: zero or inverted contrast range");
  }
  if (train_fraction <= 0.0 || train_fraction >= 1.0) {
    throw ConfigError("dataset: train_fraction must lie in (0, 1)");
  }
  if (noise < 0.0 || max_shift < 0.0 || tint < 0.0) {
    throw ConfigError("dataset: noise, max_shift and tint must be >= 0");
  }
}

ToyDataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  ToyDataset data;
  data.spec = spec;
  const std::size_t n = spec.image_size;
  const std::size_t hw = n * n;
  data.images.reserve(spec.classes * spec.per_class);
  data.labels.reserve(spec.classes * spec.per_class);

  for (std::size_t cls = 0; cls < spec.classes; ++cls) {
    for (std::size_t idx = 0; idx < spec.per_class; ++idx) {
      RngStream rng(mix_key(spec.seed, 0x746f79696d67ULL, cls, idx));
      const double amp = rng.next_uniform(spec.contrast_lo, spec.contrast_hi);
      const double dx = rng.next_uniform(-spec.max_shift, spec.max_shift);
      const double dy = rng.next_uniform(-spec.max_shift, spec.max_shift);
      std::vector<double> tint(spec.channels);
      for (double& t : tint) t = rng.next_uniform(-spec.tint, spec.tint);

      std::vector<double> img(spec.channels * hw);
      for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
          const double p = class_pattern(cls, static_cast<double>(x) - dx,
                                         static_cast<double>(y) - dy, static_cast<double>(n));
          for (std::size_t c = 0; c < spec.channels; ++c) {
            double v = 0.5 + 0.35 * amp * p * (1.0 + tint[c]);
            if (spec.noise > 0.0) v += spec.noise * rng.next_normal();
            img[c * hw + y * n + x] = std::clamp(v, 0.0, 1.0);
          }
        }
      }
      data.images.push_back(std::move(img));
      data.labels.push_back(static_cast<int>(cls));
    }
  }

  // Per-class split keeps the balance exact and the halves disjoint.
  for (std::size_t cls = 0; cls < spec.classes; ++cls) {
    std::vector<std::size_t> idx(spec.per_class);
    for (std::size_t i = 0; i < spec.per_class; ++i) idx[i] = cls * spec.per_class + i;
    RngStream rng(mix_key(spec.split_seed, 0x73706c6974ULL, cls));
    for (std::size_t i = 0; i + 1 < idx.size(); ++i) {
      std::swap(idx[i], idx[i + rng.next_below(idx.size() - i)]);
    }
    const std::size_t n_train =
        static_cast<std::size_t>(std::lround(spec.train_fraction * spec.per_class));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      (i < n_train ? data.train_indices : data.test_indices).push_back(idx[i]);
    }
  }
  std::sort(data.train_indices.begin(), data.train_indices.end());
  std::sort(data.test_indices.begin(), data.test_indices.end());
  return data;
}

double linear_probe_accuracy(const ToyDataset& data, std::uint64_t seed) {
  const std::size_t dim = data.images.empty() ? 0 : data.images[0].size();
  const std::size_t k = data.spec.classes;
  std::vector<double> w(k * dim, 0.0), b(k, 0.0);

  std::vector<std::size_t> order = data.train_indices;
  RngStream shuffle_rng(mix_key(seed, 0x70726f6265ULL));
  const double lr = 0.05;
  const int epochs = 5;
  std::vector<double> logits(k), probs(k);
  for (int e = 0; e < epochs; ++e) {
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      std::swap(order[i], order[i + shuffle_rng.next_below(order.size() - i)]);
    }
    for (std::size_t s : order) {
      const std::vector<double>& x = data.images[s];
      for (std::size_t c = 0; c < k; ++c) {
        double z = b[c];
        const double* wc = w.data() + c * dim;
        for (std::size_t j = 0; j < dim; ++j) z += wc[j] * x[j];
        logits[c] = z;
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double sum = 0.0;
      for (std::size_t c = 0; c < k; ++c) sum += (probs[c] = std::exp(logits[c] - mx));
      for (std::size_t c = 0; c < k; ++c) {
        const double g = probs[c] / sum - (static_cast<int>(c) == data.labels[s] ? 1.0 : 0.0);
        double* wc = w.data() + c * dim;
        for (std::size_t j = 0; j < dim; ++j) wc[j] -= lr * g * x[j];
        b[c] -= lr * g;
      }
    }
  }

  std::size_t correct = 0;
  for (std::size_t s : data.test_indices) {
    const std::vector<double>& x = data.images[s];
    std::size_t best = 0;
    double best_z = -1e300;
    for (std::size_t c = 0; c < k; ++c) {
      double z = b[c];
      const double* wc = w.data() + c * dim;
      for (std::size_t j = 0; j < dim; ++j) z += wc[j] * x[j];
      if (z > best_z) {
        best_z = z;
        best = c;
      }
    }
    if (static_cast<int>(best) == data.labels[s]) ++correct;
  }
  return data.test_indices.empty()
             ? 0.0
             : static_cast<double>(correct) / static_cast<double>(data.test_indices.size());
}

Container dataset_to_container(const ToyDataset& data) {
  Container c;
  c.kind = "toy-dataset";
  const DatasetSpec& s = data.spec;
  c.meta["spec"] = {{"classes", s.classes},
                    {"per_class", s.per_class},
                    {"image_size", s.image_size},
                    {"channels", s.channels},
                    {"contrast_lo", s.contrast_lo},
                    {"contrast_hi", s.contrast_hi},
                    {"max_shift", s.max_shift},
                    {"tint", s.tint},
                    {"noise", s.noise},
                    {"train_fraction", s.train_fraction},
                    {"seed", s.seed},
                    {"split_seed", s.split_seed}};

  ArrayEntry images{"images",
                    {data.size(), s.channels, s.image_size, s.image_size},
                    {}};
  images.data.reserve(data.size() * s.channels * s.image_size * s.image_size);
  for (const auto& img : data.images) images.data.insert(images.data.end(), img.begin(), img.end());
  c.arrays.push_back(std::move(images));

  auto to_doubles = [](const auto& v) {
    std::vector<double> out(v.begin(), v.end());
    return out;
  };
  c.arrays.push_back({"labels", {data.labels.size()}, to_doubles(data.labels)});
  c.arrays.push_back({"train_indices", {data.train_indices.size()}, to_doubles(data.train_indices)});
  c.arrays.push_back({"test_indices", {data.test_indices.size()}, to_doubles(data.test_indices)});
  return c;
}

ToyDataset dataset_from_container(const Container& c) {
  if (c.kind != "toy-dataset") throw ConfigError("container kind '" + c.kind + "' is not a dataset");
  ToyDataset data;
  const nlohmann::json& s = c.meta.at("spec");
  data.spec.classes = s.at("classes").get<std::size_t>();
  data.spec.per_class = s.at("per_class").get<std::size_t>();
  data.spec.image_size = s.at("image_size").get<std::size_t>();
  data.spec.channels = s.at("channels").get<std::size_t>();
  data.spec.contrast_lo = s.at("contrast_lo").get<double>();
  data.spec.contrast_hi = s.at("contrast_hi").get<double>();
  data.spec.max_shift = s.at("max_shift").get<double>();
  data.spec.tint = s.at("tint").get<double>();
  data.spec.noise = s.at("noise").get<double>();
  data.spec.train_fraction = s.at("train_fraction").get<double>();
  data.spec.seed = s.at("seed").get<std::uint64_t>();
  data.spec.split_seed = s.at("split_seed").get<std::uint64_t>();

  const ArrayEntry& images = c.array("images");
  const std::size_t count = images.shape.at(0);
  const std::size_t stride = shape_numel(images.shape) / std::max<std::size_t>(count, 1);
  for (std::size_t i = 0; i < count; ++i) {
    data.images.emplace_back(images.data.begin() + i * stride,
                             images.data.begin() + (i + 1) * stride);
  }
  for (double v : c.array("labels").data) data.labels.push_back(static_cast<int>(v));
  for (double v : c.array("train_indices").data)
    data.train_indices.push_back(static_cast<std::size_t>(v));
  for (double v : c.array("test_indices").data)
    data.test_indices.push_back(static_cast<std::size_t>(v));
  return data;
}

void save_dataset(const ToyDataset& data, const std::string& path) {
  write_container(path, dataset_to_container(data));
}

ToyDataset load_dataset(const std::string& path) {
  return dataset_from_container(read_container(path));
}

}  // namespace fpr
