#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

namespace vgen {

// Scene coordinates are (i, j) = (row, col), both in [0, 1] unless a function
// says otherwise (heatmap-space values are in cell units).
struct Vec2 {
  double i = 0.0;
  double j = 0.0;
  bool operator==(const Vec2&) const = default;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.i + b.i, a.j + b.j}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.i - b.i, a.j - b.j}; }
inline Vec2 operator*(Vec2 a, double s) { return {a.i * s, a.j * s}; }
inline double norm(Vec2 a) { return std::hypot(a.i, a.j); }
inline double dot(Vec2 a, Vec2 b) { return a.i * b.i + a.j * b.j; }
inline double cross(Vec2 a, Vec2 b) { return a.i * b.j - a.j * b.i; }

constexpr double kPi = std::numbers::pi;

// Geometry that cannot be processed further (zero perimeter, zero area, ...).
struct DegenerateGeometry : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mask topology outside the supported class (empty, multiple components).
struct UnsupportedTopology : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API called in an order that violates its state machine.
struct InvalidState : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace vgen
