#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ba/geometry.hpp"
#include "ba/image.hpp"
#include "json.hpp"

namespace ba {

using Color = std::array<double, 3>;

std::uint64_t splitmix64(std::uint64_t x);

/// Seed of sample `index` in a dataset generated from `seed`.
std::uint64_t sample_seed(std::uint64_t seed, std::size_t index);

/// One sample in ten (by hash of seed and index) goes to validation.
bool is_validation(std::uint64_t seed, std::size_t index);

enum class NoiseKind { gaussian, perlin };

std::string to_string(NoiseKind k);
NoiseKind noise_kind_from_string(const std::string& s);

struct Sample {
  ImageF input;   // noisy, 3 channels
  ImageF clean;   // f_GT, 3 channels
  Map distance;   // d_GT in pixels
  nlohmann::json meta = nlohmann::json::object();
};

struct StageOptions {
  double noise_min = 0.0;
  double noise_max = 0.0;
  double perlin_probability = 0.0;
  double gray_probability = 0.1;
};

/// Defaults per curriculum stage: low Gaussian noise at 21x21, moderate at
/// 100x100, high Gaussian or Perlin noise at 125x125.
StageOptions stage_defaults(int stage);

/// Renders a junction over a square canvas centered on the middle pixel:
/// colors per wedge from supersample^2 subpixel points, exact distances.
Sample render_junction(const Junction& g, const std::array<Color, 3>& colors, int size, int supersample = 4);

/// 21x21 single junction (edge, corner or 3-junction) with its vertex in
/// the central 11x11 pixels.
Sample gen_stage1(std::uint64_t seed, const StageOptions& opt = stage_defaults(1));

/// Noiseless straight edge between two colors crossing a size x size canvas.
Sample gen_edge(std::uint64_t seed, int size);

struct Shape {
  enum class Kind { circle, triangle } kind = Kind::circle;
  Vec2 center{};
  double radius = 0.0;
  std::array<Vec2, 3> vertices{};
  Color color{};

  bool contains(Vec2 p) const;
};

struct SceneSpec {
  int height = 240;
  int width = 320;
  Color background{};
  std::vector<Shape> shapes;  // back to front
  std::uint64_t seed = 0;

  /// Shapes lie inside the canvas expanded by 20% on every side.
  bool valid() const;
};

nlohmann::json to_json(const SceneSpec& s);
SceneSpec scene_from_json(const nlohmann::json& j);

/// Random scene with a shape count in [min_shapes, max_shapes].
SceneSpec random_scene(std::uint64_t seed, int height, int width, int min_shapes, int max_shapes);

struct SceneRender {
  ImageF clean;
  Map distance;
};

/// Painter's algorithm with 4x4 supersampling; distances to the visible
/// color-discontinuity contours, which are sampled every 0.1 px.
SceneRender gen_scene(const SceneSpec& spec);

/// 100x100 scene holding one circle and one triangle.
Sample gen_stage2(std::uint64_t seed, const StageOptions& opt = stage_defaults(2));

/// 125x125 crop of a 240x320 scene with 15 to 20 shapes.
Sample gen_stage3(std::uint64_t seed, const StageOptions& opt = stage_defaults(3));

Sample gen_sample(int stage, std::uint64_t seed, const StageOptions& opt);

/// Gaussian: i.i.d. per value with sigma = level. Perlin: 8 px cells, three
/// octaves, persistence 0.5, scaled to +-level. Result clamped to [0, 1].
ImageF add_noise(const ImageF& clean, NoiseKind kind, double level, std::uint64_t seed);

/// Peak signal-to-noise ratio of `noisy` against `clean` (peak 1).
double psnr(const ImageF& clean, const ImageF& noisy);

struct DatasetEntry {
  std::string id;
  std::string split;  // "train" or "validation"
  nlohmann::json meta;
};

struct Dataset {
  std::string dir;
  int stage = 1;
  std::uint64_t seed = 0;
  std::vector<DatasetEntry> entries;

  Sample load(std::size_t i) const;
  std::vector<std::size_t> split_indices(const std::string& split) const;
};

/// Writes index.json plus <id>_input.ppm, <id>_clean.ppm, <id>_distance.pfm.
void write_dataset(const std::string& dir, const std::vector<Sample>& samples, int stage, std::uint64_t seed);
Dataset read_dataset(const std::string& dir);

/// Generates `count` samples of a stage from a seed.
std::vector<Sample> generate_dataset(int stage, std::size_t count, std::uint64_t seed, const StageOptions& opt);

}  // namespace ba
