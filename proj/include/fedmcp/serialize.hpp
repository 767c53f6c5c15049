#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedmcp/tensor.hpp"

namespace fedmcp {

/// A named, ordered set of tensors serialized as a flat little-endian stream
/// of 64-bit floats plus a JSON manifest of (name, shape, offset) entries.
/// Offsets are in elements from the start of the payload. This is the wire
/// format, the checkpoint format, and the golden-file format.
struct NamedTensors {
  std::vector<std::pair<std::string, Tensor>> entries;

  void add(const std::string& name, const Tensor& t) { entries.emplace_back(name, t); }
  const Tensor* find(const std::string& name) const;
  std::size_t total_elements() const;
  std::vector<std::string> names() const;
};

/// Raw payload bytes (doubles, little-endian, manifest order).
std::vector<std::uint8_t> serialize_payload(const NamedTensors& tensors);

/// Manifest JSON text for the given tensor set.
std::string serialize_manifest(const NamedTensors& tensors);

/// Writes <path>.json and <path>.bin.
void save_named_tensors(const std::string& path_prefix, const NamedTensors& tensors);

/// Reads <path>.json and <path>.bin back into fresh (non-grad) tensors.
NamedTensors load_named_tensors(const std::string& path_prefix);

/// Decodes a payload against a manifest (used by wire-trace inspection).
NamedTensors deserialize(const std::string& manifest_json,
                         const std::vector<std::uint8_t>& payload);

/// True if `needle` occurs as a contiguous byte substring of `haystack`.
bool contains_bytes(const std::vector<std::uint8_t>& haystack,
                    const std::vector<std::uint8_t>& needle);

}  // namespace fedmcp
