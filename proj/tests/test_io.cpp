#include "doctest.h"

#include <fstream>

#include "ba/imageio.hpp"
#include "ba/tensor_file.hpp"

using namespace ba;

TEST_CASE("netpbm round trip on the 8-bit grid") {
  ImageF img(3, 4, 3);
  for (std::size_t i = 0; i < img.data().size(); ++i) img.data()[i] = (i * 17 % 256) / 255.0;
  io::write_ppm("test_io.ppm", img);
  CHECK(io::read_pnm("test_io.ppm") == img);
  Map gray(2, 5, 1, 0.2);
  io::write_pgm("test_io.pgm", gray);
  CHECK(io::read_pnm("test_io.pgm") == io::quantize8(gray));
}

TEST_CASE("pfm round trip is exact for float values") {
  ImageF img(3, 2, 3);
  for (std::size_t i = 0; i < img.data().size(); ++i) img.data()[i] = 0.25 * i - 1.5;
  io::write_pfm("test_io.pfm", img);
  CHECK(io::read_pfm("test_io.pfm") == img);
  // Bottom-to-top scanlines: the first payload row is the image's last row.
  std::ifstream in("test_io.pfm", std::ios::binary);
  std::string magic, dims, scale;
  std::getline(in, magic);
  std::getline(in, dims);
  std::getline(in, scale);
  float first;
  in.read(reinterpret_cast<char*>(&first), 4);
  CHECK(first == static_cast<float>(img(0, 2, 0)));
  CHECK(magic == "PF");
}

TEST_CASE("malformed files report the path") {
  std::ofstream("test_io_bad.ppm") << "P6\n3 x\n255\n";
  CHECK_THROWS_AS(io::read_pnm("test_io_bad.ppm"), FormatError);
  CHECK_THROWS(io::read_pnm("test_io_missing.ppm"));
}

TEST_CASE("tensor container round trip") {
  io::TensorFile f;
  f.meta = {{"k", 3}};
  f.tensors.push_back({"a", {2, 3}, {1, 2, 3, 4, 5, 6}});
  f.tensors.push_back({"b", {1}, {-0.5f}});
  io::write_tensor_file("test_io.bin", f);
  const auto r = io::read_tensor_file("test_io.bin");
  CHECK(r.meta.at("k") == 3);
  CHECK(r.at("a").shape == std::vector<int>{2, 3});
  CHECK(r.at("a").data == f.tensors[0].data);
  CHECK(r.at("b").data == f.tensors[1].data);
  CHECK_THROWS(r.at("c"));
}
