#include "ba/field_io.hpp"

#include "ba/tensor_file.hpp"

namespace ba {

JunctionField decode_field(const RawField& raw) {
  require(raw.values.size() == raw.size() * kRawParams, "raw field: size mismatch");
  JunctionField field(raw.height, raw.width);
  for (std::size_t k = 0; k < raw.size(); ++k) decode_pixel(raw.pixel(k), field.junction(k), field.window(k));
  return field;
}

RawField encode_field(const JunctionField& field) {
  RawField raw{field.height(), field.width(), std::vector<double>(field.size() * kRawParams)};
  for (std::size_t k = 0; k < field.size(); ++k) encode_pixel(field.junction(k), field.window(k), raw.pixel(k));
  return raw;
}

void write_field(const std::string& path, const RawField& raw) {
  io::TensorFile file;
  file.meta = {{"kind", "junction_field"},
               {"version", 1},
               {"height", raw.height},
               {"width", raw.width},
               {"layout", {"ux", "uy", "sin_theta", "cos_theta", "omega_logit_1", "omega_logit_2",
                           "omega_logit_3", "window_logit_1", "window_logit_2", "window_logit_3"}}};
  file.tensors.push_back({"field", {raw.height, raw.width, kRawParams},
                          std::vector<float>(raw.values.begin(), raw.values.end())});
  io::write_tensor_file(path, file);
}

RawField read_field(const std::string& path) {
  const auto file = io::read_tensor_file(path);
  if (file.meta.value("kind", "") != "junction_field") throw FormatError(path, 0, "not a junction field file");
  const auto& t = file.at("field");
  if (t.shape.size() != 3 || t.shape[2] != kRawParams) throw FormatError(path, 0, "field tensor has wrong shape");
  RawField raw{t.shape[0], t.shape[1], std::vector<double>(t.data.begin(), t.data.end())};
  return raw;
}

}  // namespace ba
