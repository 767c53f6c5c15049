#include "fedmcp/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "payload format is little-endian; byte swapping not implemented");

namespace fedmcp {

const Tensor* NamedTensors::find(const std::string& name) const {
  for (const auto& [n, t] : entries) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::size_t NamedTensors::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries) n += t.numel();
  return n;
}

std::vector<std::string> NamedTensors::names() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& [n, t] : entries) out.push_back(n);
  return out;
}

std::vector<std::uint8_t> serialize_payload(const NamedTensors& tensors) {
  std::vector<std::uint8_t> bytes;
  bytes.resize(tensors.total_elements() * sizeof(double));
  std::size_t off = 0;
  for (const auto& [name, t] : tensors.entries) {
    std::memcpy(bytes.data() + off, t.values().data(), t.numel() * sizeof(double));
    off += t.numel() * sizeof(double);
  }
  return bytes;
}

std::string serialize_manifest(const NamedTensors& tensors) {
  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : tensors.entries) {
    nlohmann::ordered_json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["offset"] = offset;
    manifest.push_back(entry);
    offset += t.numel();
  }
  return manifest.dump(2);
}

void save_named_tensors(const std::string& path_prefix, const NamedTensors& tensors) {
  {
    std::ofstream mf(path_prefix + ".json", std::ios::trunc);
    if (!mf) throw std::runtime_error("serialize: cannot write " + path_prefix + ".json");
    mf << serialize_manifest(tensors) << "\n";
  }
  {
    std::ofstream bf(path_prefix + ".bin", std::ios::trunc | std::ios::binary);
    if (!bf) throw std::runtime_error("serialize: cannot write " + path_prefix + ".bin");
    auto bytes = serialize_payload(tensors);
    bf.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  }
}

NamedTensors load_named_tensors(const std::string& path_prefix) {
  std::ifstream mf(path_prefix + ".json");
  if (!mf) throw std::runtime_error("serialize: cannot read " + path_prefix + ".json");
  std::string manifest((std::istreambuf_iterator<char>(mf)), std::istreambuf_iterator<char>());

  std::ifstream bf(path_prefix + ".bin", std::ios::binary);
  if (!bf) throw std::runtime_error("serialize: cannot read " + path_prefix + ".bin");
  std::vector<std::uint8_t> payload((std::istreambuf_iterator<char>(bf)),
                                    std::istreambuf_iterator<char>());
  return deserialize(manifest, payload);
}

NamedTensors deserialize(const std::string& manifest_json,
                         const std::vector<std::uint8_t>& payload) {
  nlohmann::json manifest = nlohmann::json::parse(manifest_json);
  NamedTensors out;
  for (const auto& entry : manifest) {
    const std::string name = entry.at("name").get<std::string>();
    const Shape shape = entry.at("shape").get<Shape>();
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    const std::size_t count = shape_numel(shape);
    if ((offset + count) * sizeof(double) > payload.size()) {
      throw std::runtime_error("serialize: payload too short for tensor '" + name + "'");
    }
    std::vector<double> values(count);
    std::memcpy(values.data(), payload.data() + offset * sizeof(double),
                count * sizeof(double));
    Tensor t = Tensor::from_values(shape, std::move(values));
    t.set_name(name);
    out.add(name, t);
  }
  return out;
}

bool contains_bytes(const std::vector<std::uint8_t>& haystack,
                    const std::vector<std::uint8_t>& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) !=
         haystack.end();
}

}  // namespace fedmcp
