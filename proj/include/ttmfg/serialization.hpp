#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "ttmfg/errors.hpp"
#include "ttmfg/tensor_train.hpp"

namespace ttmfg {

inline nlohmann::json to_json(const TensorTrain& tt) {
  nlohmann::json j;
  j["format"] = "ttmfg.tensor_train";
  j["version"] = 1;
  j["dim"] = tt.dim();
  j["log_form"] = tt.log_form();
  // JSON has no infinity; a negative margin encodes "unbounded".
  const double margin = tt.extrapolation_margin();
  j["extrapolation_margin"] = std::isinf(margin) ? -1.0 : margin;
  for (int k = 0; k < tt.dim(); ++k) {
    const Core& c = tt.core(k);
    j["bases"].push_back({{"degree", tt.basis(k).degree}, {"half_width", tt.basis(k).half_width}});
    j["cores"].push_back({{"left", c.left}, {"modes", c.modes}, {"right", c.right}, {"data", c.data}});
  }
  return j;
}

inline TensorTrain tensor_train_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "ttmfg.tensor_train") throw ConfigError("not a serialized tensor train");
    std::vector<BasisSpec> bases;
    std::vector<Core> cores;
    for (const auto& b : j.at("bases")) bases.emplace_back(b.at("degree").get<int>(), b.at("half_width").get<double>());
    for (const auto& c : j.at("cores")) {
      Core core(c.at("left").get<int>(), c.at("modes").get<int>(), c.at("right").get<int>());
      auto data = c.at("data").get<std::vector<double>>();
      if (data.size() != core.data.size()) throw ConfigError("tensor train core payload has the wrong size");
      core.data = std::move(data);
      cores.push_back(std::move(core));
    }
    double margin = j.at("extrapolation_margin").get<double>();
    if (margin < 0.0) margin = std::numeric_limits<double>::infinity();
    return TensorTrain(std::move(bases), std::move(cores), j.at("log_form").get<bool>(), margin);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed tensor train JSON: ") + e.what());
  }
}

inline void save_tensor_train(const TensorTrain& tt, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << to_json(tt).dump();
}

inline TensorTrain load_tensor_train(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  return tensor_train_from_json(nlohmann::json::parse(in));
}

}  // namespace ttmfg
