#include "ba/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ba/core.hpp"

namespace ba::io {
namespace {

static_assert(std::endian::native == std::endian::little, "payloads are stored in host order");

std::size_t element_count(const std::vector<int>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

}  // namespace

const NamedTensor& TensorFile::at(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw std::runtime_error("tensor '" + name + "' not found");
}

void write_tensor_file(const std::string& path, const TensorFile& file) {
  nlohmann::json header;
  header["meta"] = file.meta;
  header["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : file.tensors) {
    require(element_count(t.shape) == t.data.size(), "tensor file: shape does not match data size");
    header["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.data.size() * sizeof(float);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << header.dump() << '\n';
  for (const auto& t : file.tensors)
    out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * 4));
  if (!out) throw std::runtime_error("write failed: " + path);
}

TensorFile read_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path, 0, "missing manifest line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path, e.byte, "manifest is not valid JSON");
  }
  const std::size_t base = line.size() + 1;
  std::ostringstream rest;
  rest << in.rdbuf();
  const std::string payload = rest.str();

  TensorFile file;
  file.meta = header.value("meta", nlohmann::json::object());
  if (!header.contains("tensors") || !header["tensors"].is_array())
    throw FormatError(path, 0, "manifest lacks a tensor list");
  for (const auto& entry : header["tensors"]) {
    NamedTensor t;
    t.name = entry.at("name").get<std::string>();
    t.shape = entry.at("shape").get<std::vector<int>>();
    const auto offset = entry.at("offset").get<std::size_t>();
    const std::size_t count = element_count(t.shape);
    if (offset + count * 4 > payload.size())
      throw FormatError(path, base + payload.size(), "payload truncated in tensor '" + t.name + "'");
    t.data.resize(count);
    std::memcpy(t.data.data(), payload.data() + offset, count * 4);
    file.tensors.push_back(std::move(t));
  }
  return file;
}

}  // namespace ba::io
