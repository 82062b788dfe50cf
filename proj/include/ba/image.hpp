#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "ba/core.hpp"

namespace ba {

/// Interleaved H x W x C raster, row-major, y down.
template <class T>
class Image {
public:
  Image() = default;
  Image(int height, int width, int channels, T fill = T{})
      : height_(height), width_(width), channels_(channels),
        data_(static_cast<std::size_t>(height) * width * channels, fill) {
    require(height >= 0 && width >= 0 && channels >= 1, "Image: bad dimensions");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const { return data_.empty(); }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

  T& operator()(int x, int y, int c = 0) { return data_[index(x, y) * channels_ + c]; }
  const T& operator()(int x, int y, int c = 0) const { return data_[index(x, y) * channels_ + c]; }

  std::span<T> pixel(std::size_t k) { return {data_.data() + k * channels_, static_cast<std::size_t>(channels_)}; }
  std::span<const T> pixel(std::size_t k) const {
    return {data_.data() + k * channels_, static_cast<std::size_t>(channels_)};
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_shape(const Image& o) const {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }
  friend bool operator==(const Image&, const Image&) = default;

private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

using ImageF = Image<double>;
/// Single-channel real map.
using Map = Image<double>;

/// Channel mean; returns a 1-channel image.
inline ImageF to_gray(const ImageF& img) {
  if (img.channels() == 1) return img;
  ImageF out(img.height(), img.width(), 1);
  for (std::size_t k = 0; k < img.pixels(); ++k) {
    double s = 0.0;
    for (double v : img.pixel(k)) s += v;
    out.data()[k] = s / img.channels();
  }
  return out;
}

/// Replicates a grayscale image to three channels (or returns RGB unchanged).
inline ImageF to_rgb(const ImageF& img) {
  if (img.channels() == 3) return img;
  require(img.channels() == 1, "to_rgb: expects 1 or 3 channels");
  ImageF out(img.height(), img.width(), 3);
  for (std::size_t k = 0; k < img.pixels(); ++k)
    for (int c = 0; c < 3; ++c) out.data()[k * 3 + c] = img.data()[k];
  return out;
}

inline ImageF crop(const ImageF& img, int x0, int y0, int w, int h) {
  require(x0 >= 0 && y0 >= 0 && x0 + w <= img.width() && y0 + h <= img.height(), "crop: out of bounds");
  ImageF out(h, w, img.channels());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels(); ++c) out(x, y, c) = img(x0 + x, y0 + y, c);
  return out;
}

}  // namespace ba
