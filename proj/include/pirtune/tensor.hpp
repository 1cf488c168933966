#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "pirtune/errors.hpp"

namespace pirtune {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense row-major float tensor. Plain value type: copying copies the data.
struct Tensor {
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(static_cast<size_t>(numel(shape)), 0.0f) {}
  Tensor(Shape s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<std::int64_t>(data.size()) != numel(shape)) {
      throw ShapeError("tensor data size " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    }
  }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }

  float& at(std::int64_t i) { return data[static_cast<size_t>(i)]; }
  float at(std::int64_t i) const { return data[static_cast<size_t>(i)]; }
};

}  // namespace pirtune
