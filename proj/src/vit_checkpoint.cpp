#include <string>

#include "fpr/checkpoint.hpp"
#include "fpr/errors.hpp"
#include "fpr/vit.hpp"

namespace fpr {

namespace {

nlohmann::json config_json(const VitConfig& cfg) {
  return {{"image_size", cfg.image_size}, {"channels", cfg.channels},
          {"patch", cfg.patch},           {"embed_dim", cfg.embed_dim},
          {"heads", cfg.heads},           {"blocks", cfg.blocks},
          {"mlp_hidden", cfg.mlp_hidden}, {"classes", cfg.classes},
          {"class_token", cfg.class_token},  {"qk_init_std", cfg.qk_init_std}};
}

VitConfig config_from_json(const nlohmann::json& j) {
  VitConfig cfg;
  cfg.image_size = j.at("image_size").get<std::size_t>();
  cfg.channels = j.at("channels").get<std::size_t>();
  cfg.patch = j.at("patch").get<std::size_t>();
  cfg.embed_dim = j.at("embed_dim").get<std::size_t>();
  cfg.heads = j.at("heads").get<std::size_t>();
  cfg.blocks = j.at("blocks").get<std::size_t>();
  cfg.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
  cfg.classes = j.at("classes").get<std::size_t>();
  cfg.class_token = j.at("class_token").get<bool>();
  cfg.qk_init_std = j.value("qk_init_std", cfg.qk_init_std);
  cfg.validate();
  return cfg;
}

// Stable parameter names matching VitModel::parameters() order.
std::vector<std::string> parameter_names(const VitConfig& cfg) {
  std::vector<std::string> names = {"patch_w", "patch_b", "cls_token", "pos_embed"};
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    const std::string pre = "block" + std::to_string(b) + ".";
    names.push_back(pre + "ln1_gain");
    names.push_back(pre + "ln1_bias");
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::string hp = pre + "head" + std::to_string(h) + ".";
      names.push_back(hp + "wq");
      names.push_back(hp + "bq");
      names.push_back(hp + "wk");
      names.push_back(hp + "bk");
      names.push_back(hp + "wv");
      names.push_back(hp + "bv");
      names.push_back(hp + "wo");
    }
    names.push_back(pre + "bo");
    names.push_back(pre + "ln2_gain");
    names.push_back(pre + "ln2_bias");
    names.push_back(pre + "mlp_w1");
    names.push_back(pre + "mlp_b1");
    names.push_back(pre + "mlp_w2");
    names.push_back(pre + "mlp_b2");
  }
  names.push_back("final_ln_gain");
  names.push_back("final_ln_bias");
  names.push_back("head_w");
  names.push_back("head_b");
  return names;
}

}  // namespace

Container vit_to_container(const VitModel& model) {
  Container c;
  c.kind = "vit-model";
  c.meta["config"] = config_json(model.cfg);
  const auto params = model.parameters();
  const auto names = parameter_names(model.cfg);
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.arrays.push_back({names[i], params[i].shape(), params[i].values()});
  }
  return c;
}

VitModel vit_from_container(const Container& c) {
  if (c.kind != "vit-model") {
    throw ConfigError("checkpoint kind '" + c.kind + "' is not a vit-model");
  }
  VitModel model = make_vit(config_from_json(c.meta.at("config")), 0);
  const auto params = model.parameters();
  const auto names = parameter_names(model.cfg);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const ArrayEntry& e = c.array(names[i]);
    if (e.shape != params[i].shape()) {
      throw ConfigError("checkpoint array '" + names[i] + "' has shape " + shape_str(e.shape) +
                        ", expected " + shape_str(params[i].shape()));
    }
    Tensor t = params[i];
    t.values() = e.data;
  }
  return model;
}

void save_vit(const VitModel& model, const std::string& path) {
  write_container(path, vit_to_container(model));
}

VitModel load_vit(const std::string& path) { return vit_from_container(read_container(path)); }

}  // namespace fpr
