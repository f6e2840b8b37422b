#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fpr/checkpoint.hpp"
#include "fpr/tensor.hpp"

namespace fpr {

// Class-conditional synthetic patterns: stripes at several orientations, a
// checker, blobs, a ring and edges, jittered by amplitude, shift, channel
// tint and pixel noise. Small enough to regenerate on demand.
struct DatasetSpec {
  std::size_t classes = 10;
  std::size_t per_class = 600;
  std::size_t image_size = 16;
  std::size_t channels = 3;
  double contrast_lo = 0.5, contrast_hi = 1.0;  // amplitude jitter
  double max_shift = 2.0;                       // pattern translation, pixels
  double tint = 0.1;                            // per-channel gain jitter
  double noise = 0.08;                          // gaussian pixel noise
  double train_fraction = 5.0 / 6.0;
  std::uint64_t seed = 1;
  std::uint64_t split_seed = 2;

  void validate() const;  // classes >= 2, nonzero contrast, sane fractions
};

struct ToyDataset {
  DatasetSpec spec;
  std::vector<std::vector<double>> images;  // C*H*W, pixel range [0,1]
  std::vector<int> labels;
  std::vector<std::size_t> train_indices;  // disjoint from test_indices
  std::vector<std::size_t> test_indices;

  Shape image_shape() const { return {spec.channels, spec.image_size, spec.image_size}; }
  std::size_t size() const { return images.size(); }
};

ToyDataset generate_dataset(const DatasetSpec& spec);

// Multinomial logistic regression on raw pixels; the separability floor for
// any learnable spec.
double linear_probe_accuracy(const ToyDataset& data, std::uint64_t seed = 11);

Container dataset_to_container(const ToyDataset& data);
ToyDataset dataset_from_container(const Container& c);
void save_dataset(const ToyDataset& data, const std::string& path);
ToyDataset load_dataset(const std::string& path);

}  // namespace fpr
