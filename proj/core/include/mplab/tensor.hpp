#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mplab {

// Dense row-major tensor of doubles. Shapes are explicit; there is no
// broadcasting. Heavy math lives behind the network and mixture APIs, so
// this type only needs storage, shape checks, and element access.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> v)
      : shape(std::move(s)), values(std::move(v)) {
    if (numel_of(shape) != static_cast<std::int64_t>(values.size()))
      throw std::invalid_argument("Tensor: shape does not match value count");
  }

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) {
    const auto n = numel_of(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(values.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  double& at(int i) { return values.at(static_cast<std::size_t>(i)); }
  double at(int i) const { return values.at(static_cast<std::size_t>(i)); }

  double& at(int r, int c) {
    if (rank() != 2) throw std::logic_error("Tensor: 2-d access on rank " + std::to_string(rank()));
    return values.at(static_cast<std::size_t>(r) * shape[1] + c);
  }
  double at(int r, int c) const {
    if (rank() != 2) throw std::logic_error("Tensor: 2-d access on rank " + std::to_string(rank()));
    return values.at(static_cast<std::size_t>(r) * shape[1] + c);
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

}  // namespace mplab
