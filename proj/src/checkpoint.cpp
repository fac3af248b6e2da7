#include "skillnet/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace skillnet {

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return std::filesystem::path(stem.string() + suffix);
}

std::uint64_t to_little(std::uint64_t bits) {
  if constexpr (std::endian::native == std::endian::little) return bits;
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out |= ((bits >> (8 * i)) & 0xFFu) << (8 * (7 - i));
  return out;
}

std::string format_shape(const Shape& shape) {
  if (shape.empty()) return "scalar";
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "x" : "") + std::to_string(shape[i]);
  return out;
}

Shape parse_shape(const std::string& text) {
  if (text == "scalar") return {};
  Shape shape;
  std::istringstream in(text);
  std::string part;
  while (std::getline(in, part, 'x')) shape.push_back(std::stoull(part));
  return shape;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

void write_archive(const std::filesystem::path& stem, const std::vector<NamedArray>& arrays) {
  std::ofstream manifest(with_suffix(stem, ".manifest"));
  std::ofstream blob(with_suffix(stem, ".bin"), std::ios::binary);
  if (!manifest || !blob) throw std::runtime_error("cannot write archive " + stem.string());
  std::size_t offset = 0;
  for (const auto& a : arrays) {
    if (shape_numel(a.shape) != a.data.size()) throw std::invalid_argument("archive entry '" + a.name + "' has a bad size");
    manifest << a.name << ' ' << format_shape(a.shape) << ' ' << offset << '\n';
    for (double v : a.data) {
      const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(v));
      blob.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
    offset += a.data.size();
  }
  if (!manifest || !blob) throw std::runtime_error("failed writing archive " + stem.string());
}

std::vector<NamedArray> read_archive(const std::filesystem::path& stem) {
  std::ifstream manifest(with_suffix(stem, ".manifest"));
  std::ifstream blob(with_suffix(stem, ".bin"), std::ios::binary);
  if (!manifest || !blob) throw std::runtime_error("cannot open archive " + stem.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());
  const std::size_t available = bytes.size() / sizeof(double);
  std::vector<NamedArray> arrays;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name, shape_text;
    std::size_t offset = 0;
    if (!(fields >> name >> shape_text >> offset)) {
      throw std::runtime_error(stem.string() + ".manifest:" + std::to_string(line_no) + ": malformed entry");
    }
    NamedArray a{name, parse_shape(shape_text), {}};
    const std::size_t n = shape_numel(a.shape);
    if (offset + n > available) {
      throw std::runtime_error(stem.string() + ".bin is truncated at entry '" + name + "'");
    }
    a.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, bytes.data() + (offset + i) * sizeof(double), sizeof bits);
      a.data[i] = std::bit_cast<double>(to_little(bits));
    }
    arrays.push_back(std::move(a));
  }
  return arrays;
}

std::vector<NamedArray> snapshot_parameters(const Model& model) {
  std::vector<NamedArray> out;
  for (const auto& [name, t] : model.parameters()) {
    out.push_back({name, t.shape(), std::vector<double>(t.data().begin(), t.data().end())});
  }
  return out;
}

void assign_parameters(Model& model, const std::vector<NamedArray>& arrays) {
  auto& params = model.parameters();
  if (arrays.size() != params.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(arrays.size()) + " tensors, model expects " +
                             std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, t] = params[i];
    if (arrays[i].name != name || arrays[i].shape != t.shape()) {
      throw std::runtime_error("checkpoint tensor '" + arrays[i].name + "' " + shape_to_string(arrays[i].shape) +
                               " does not match '" + name + "' " + shape_to_string(t.shape()));
    }
    std::copy(arrays[i].data.begin(), arrays[i].data.end(), t.mutable_data().begin());
  }
}

void save_model(const std::filesystem::path& dir, const Model& model) {
  std::filesystem::create_directories(dir);
  std::ofstream config(dir / "model.json");
  config << to_json(model.config()) << '\n';
  if (!config) throw std::runtime_error("cannot write " + (dir / "model.json").string());
  write_archive(dir / "params", snapshot_parameters(model));
}

std::unique_ptr<Model> load_model(const std::filesystem::path& dir) {
  auto model = std::make_unique<Model>(model_config_from_json(read_text(dir / "model.json")));
  assign_parameters(*model, read_archive(dir / "params"));
  return model;
}

}  // namespace skillnet
