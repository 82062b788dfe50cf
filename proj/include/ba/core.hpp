#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ba {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Pillbox side lengths of the windowing dictionary.
inline constexpr std::array<int, 3> kWindowDiameters{3, 9, 17};
/// Half-width of the largest pillbox; every patch lives in a 17x17 box.
inline constexpr int kPatchRadius = 8;
inline constexpr int kPatchSide = 2 * kPatchRadius + 1;
/// Affinity kernels span twice the patch support.
inline constexpr int kAffinityRadius = 2 * kPatchRadius;
inline constexpr int kAffinitySide = 2 * kAffinityRadius + 1;

inline constexpr double kDefaultEta = 0.3;

/// Thrown when a caller breaks an operation's precondition.
class ContractError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed file contents; carries the offending path and byte offset.
class FormatError : public std::runtime_error {
public:
  FormatError(const std::string& path, std::size_t offset, const std::string& what)
      : std::runtime_error(path + " (byte " + std::to_string(offset) + "): " + what),
        path_(path), offset_(offset) {}

  const std::string& path() const { return path_; }
  std::size_t offset() const { return offset_; }

private:
  std::string path_;
  std::size_t offset_;
};

inline void require(bool cond, const char* msg) {
  if (!cond) throw ContractError(msg);
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Vec2 a, Vec2 b) = default;
};

inline constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

/// Wraps an angle into [0, 2pi).
inline double wrap_angle(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

/// Signed shortest difference b - a, in (-pi, pi].
inline double angle_diff(double a, double b) {
  double d = std::remainder(b - a, kTwoPi);
  if (d <= -kPi) d += kTwoPi;
  return d;
}

}  // namespace ba
