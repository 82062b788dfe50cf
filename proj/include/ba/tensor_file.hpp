#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace ba::io {

// Container: one line of JSON manifest, a newline, then little-endian
// float32 payloads back to back. The manifest lists each tensor's name,
// shape and byte offset into the payload, plus free-form metadata.

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

struct TensorFile {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor& at(const std::string& name) const;
};

void write_tensor_file(const std::string& path, const TensorFile& file);
TensorFile read_tensor_file(const std::string& path);

}  // namespace ba::io
