#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "fpr/tensor.hpp"

namespace fpr {

// On-disk container used for models, datasets and adversarial outputs.
// Layout (all integers little-endian regardless of host):
//   bytes 0..3   magic "FPRC"
//   u32          format version (currently 1)
//   u64          header length in bytes
//   header       UTF-8 JSON: {"kind": ..., "meta": {...},
//                 "arrays": [{"name","shape","offset","count"}, ...]}
//   payload      concatenated float64 arrays, little-endian, in header order
struct ArrayEntry {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct Container {
  std::string kind;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<ArrayEntry> arrays;

  const ArrayEntry& array(const std::string& name) const;  // throws if absent
  bool has_array(const std::string& name) const;
};

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

}  // namespace fpr
