#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <numeric>
#include <vector>

#include "copush/error.hpp"

namespace copush {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

// Dense row-major float64 array with an explicit shape. Used for model
// parameters, gradients and checkpoint payloads; the math itself runs on
// Eigen maps over the flat storage.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(numel(shape), 0.0);
  }

  static std::size_t numel(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return data.size(); }

  std::size_t dim(std::size_t i) const { return shape.at(i); }

  // 2-D view
  MapRM mat() {
    if (shape.size() != 2) throw ValidationError("Tensor::mat: not 2-D");
    return MapRM(data.data(), static_cast<Eigen::Index>(shape[0]),
                 static_cast<Eigen::Index>(shape[1]));
  }
  CMapRM mat() const {
    if (shape.size() != 2) throw ValidationError("Tensor::mat: not 2-D");
    return CMapRM(data.data(), static_cast<Eigen::Index>(shape[0]),
                  static_cast<Eigen::Index>(shape[1]));
  }

  // slice k of a 3-D tensor, viewed as shape[1] x shape[2]
  MapRM slice(std::size_t k) {
    if (shape.size() != 3) throw ValidationError("Tensor::slice: not 3-D");
    const std::size_t n = shape[1] * shape[2];
    return MapRM(data.data() + k * n, static_cast<Eigen::Index>(shape[1]),
                 static_cast<Eigen::Index>(shape[2]));
  }
  CMapRM slice(std::size_t k) const {
    if (shape.size() != 3) throw ValidationError("Tensor::slice: not 3-D");
    const std::size_t n = shape[1] * shape[2];
    return CMapRM(data.data() + k * n, static_cast<Eigen::Index>(shape[1]),
                  static_cast<Eigen::Index>(shape[2]));
  }

  // flat view as an Eigen vector
  Eigen::Map<Eigen::VectorXd> vec() {
    return {data.data(), static_cast<Eigen::Index>(data.size())};
  }
  Eigen::Map<const Eigen::VectorXd> vec() const {
    return {data.data(), static_cast<Eigen::Index>(data.size())};
  }

  void set_zero() { std::fill(data.begin(), data.end(), 0.0); }
};

}  // namespace copush
