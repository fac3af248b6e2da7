#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "skillnet/transformer.hpp"

namespace skillnet {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

// `<stem>.manifest` lists "name shape offset" per line (shape as d0xd1..., offset in
// doubles); `<stem>.bin` holds the values as little-endian float64.
void write_archive(const std::filesystem::path& stem, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_archive(const std::filesystem::path& stem);

std::vector<NamedArray> snapshot_parameters(const Model& model);
// Names and shapes must match the model's layout exactly.
void assign_parameters(Model& model, const std::vector<NamedArray>& arrays);

// Writes model.json, params.manifest and params.bin into `dir`.
void save_model(const std::filesystem::path& dir, const Model& model);
std::unique_ptr<Model> load_model(const std::filesystem::path& dir);

}  // namespace skillnet
