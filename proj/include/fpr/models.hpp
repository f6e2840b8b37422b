#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "fpr/checkpoint.hpp"
#include "fpr/tensor.hpp"
#include "fpr/vit.hpp"

namespace fpr {

// Trainable classifier over (C,H,W) images. Parameters are shared tensor
// handles in a deterministic order; clone() produces fresh leaves with the
// same values so concurrent training workers never share grad buffers.
class Model {
 public:
  virtual ~Model() = default;

  const std::string& name() const { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }

  virtual std::string kind() const = 0;
  virtual nlohmann::json arch_json() const = 0;
  virtual Tensor forward(const Tensor& image) const = 0;  // logits
  virtual std::vector<Tensor> parameters() const = 0;
  virtual std::unique_ptr<Model> clone() const = 0;
  virtual Container to_container() const = 0;

  // Non-null only for attention models; the attack engine requires it.
  virtual const VitModel* as_vit() const { return nullptr; }

  int predict(const std::vector<double>& image, const Shape& shape) const;
  void set_requires_grad(bool rg) const;

 private:
  std::string name_;
};

// arch descriptor: {"kind": "vit"|"mixer"|"conv", ...dimensions...}
std::unique_ptr<Model> make_model(const nlohmann::json& arch, std::uint64_t seed);
std::unique_ptr<Model> model_from_container(const Container& c);
std::unique_ptr<Model> load_model(const std::string& path);
void save_model(const Model& model, const std::string& path);

}  // namespace fpr
