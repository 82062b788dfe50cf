#pragma once

#include <string>
#include <vector>

#include "ba/fieldops.hpp"
#include "ba/objective.hpp"

namespace ba {

/// A field in the raw decoder parameterization, kRawParams values per pixel.
struct RawField {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  std::size_t size() const { return static_cast<std::size_t>(height) * width; }
  const double* pixel(std::size_t k) const { return values.data() + k * kRawParams; }
  double* pixel(std::size_t k) { return values.data() + k * kRawParams; }
};

JunctionField decode_field(const RawField& raw);
RawField encode_field(const JunctionField& field);

/// Field file: tensor container holding one H x W x 10 tensor named "field".
void write_field(const std::string& path, const RawField& raw);
RawField read_field(const std::string& path);

}  // namespace ba
