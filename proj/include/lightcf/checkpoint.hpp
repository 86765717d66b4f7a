#pragma once

// Model checkpointing: a JSON manifest describing shapes and configuration,
// plus one raw float64 array file per parameter table (host byte order,
// little-endian on every supported target). Reload is bit-exact.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "lightcf/propagation.hpp"

namespace lightcf {

namespace detail {

inline void write_raw_matrix(const std::filesystem::path& path, const Matrix& mt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(mt.data()),
            std::streamsize(sizeof(double) * mt.size()));
  if (!out) throw std::runtime_error("short write: " + path.string());
}

inline Matrix read_raw_matrix(const std::filesystem::path& path, std::size_t rows,
                              std::size_t cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing checkpoint array: " + path.string());
  Matrix mt(rows, cols);
  in.read(reinterpret_cast<char*>(mt.data()), std::streamsize(sizeof(double) * mt.size()));
  if (std::size_t(in.gcount()) != sizeof(double) * mt.size())
    throw std::runtime_error("truncated checkpoint array: " + path.string());
  if (in.peek() != std::ifstream::traits_type::eof())
    throw std::runtime_error("trailing bytes in checkpoint array: " + path.string());
  return mt;
}

inline nlohmann::json table_entry(const std::filesystem::path& dir, const std::string& file,
                                  const Matrix& mt) {
  write_raw_matrix(dir / file, mt);
  return {{"rows", mt.rows()}, {"cols", mt.cols()}, {"file", file}};
}

}  // namespace detail

inline void save_model(const std::filesystem::path& dir, const Model& model,
                       std::uint64_t seed = 0) {
  model.validate();
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "lightcf-model";
  manifest["version"] = 1;
  manifest["seed"] = seed;
  manifest["fusion"] = {{"mode", to_string(model.fusion.mode)},
                        {"weights", model.fusion.weights}};
  nlohmann::json nets = nlohmann::json::array();
  for (std::size_t k = 0; k < model.nets.size(); ++k) {
    const Network& net = model.nets[k];
    nlohmann::json j;
    j["variant"] = to_string(net.spec.variant);
    j["num_prop_layers"] = net.spec.num_prop_layers;
    j["normalization"] = to_string(net.spec.normalization);
    j["include_layer0"] = net.spec.include_layer0;
    std::string stem = "net" + std::to_string(k);
    j["user0"] = net.user0.size()
                     ? detail::table_entry(dir, stem + "_user0.bin", net.user0)
                     : nlohmann::json();
    j["item0"] = net.item0.size()
                     ? detail::table_entry(dir, stem + "_item0.bin", net.item0)
                     : nlohmann::json();
    nets.push_back(std::move(j));
  }
  manifest["nets"] = std::move(nets);
  std::ofstream out(dir / "model.json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + (dir / "model.json").string());
  out << manifest.dump(2) << '\n';
}

inline Model load_model(const std::filesystem::path& dir) {
  std::filesystem::path manifest_path = dir / "model.json";
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("missing checkpoint manifest: " + manifest_path.string());
  nlohmann::json manifest = nlohmann::json::parse(in);
  if (manifest.value("format", "") != "lightcf-model")
    throw std::runtime_error("not a model checkpoint: " + manifest_path.string());
  if (manifest.value("version", 0) != 1)
    throw std::runtime_error("unsupported checkpoint version in " + manifest_path.string());

  Model model;
  model.fusion.mode = fusion_mode_from_string(manifest.at("fusion").at("mode").get<std::string>());
  model.fusion.weights = manifest.at("fusion").at("weights").get<std::vector<double>>();
  for (const nlohmann::json& j : manifest.at("nets")) {
    Network net;
    net.spec.variant = variant_from_string(j.at("variant").get<std::string>());
    net.spec.num_prop_layers = j.at("num_prop_layers").get<std::size_t>();
    net.spec.normalization = norm_variant_from_string(j.at("normalization").get<std::string>());
    net.spec.include_layer0 = j.at("include_layer0").get<bool>();
    auto load_table = [&](const nlohmann::json& entry) {
      if (entry.is_null()) return Matrix();
      return detail::read_raw_matrix(dir / entry.at("file").get<std::string>(),
                                     entry.at("rows").get<std::size_t>(),
                                     entry.at("cols").get<std::size_t>());
    };
    net.user0 = load_table(j.at("user0"));
    net.item0 = load_table(j.at("item0"));
    model.nets.push_back(std::move(net));
  }
  model.validate();
  return model;
}

inline std::uint64_t checkpoint_seed(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw std::runtime_error("missing checkpoint manifest: " + (dir / "model.json").string());
  return nlohmann::json::parse(in).value("seed", std::uint64_t{0});
}

}  // namespace lightcf
