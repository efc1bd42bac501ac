#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>

namespace sbo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Flat real vector of low-dimensional perturbation parameters.
using SubspaceCoeffs = Eigen::VectorXd;

/// Class index in {0, ..., K-1}.
using Label = int;

/// Channel, height and width of an image.
struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  [[nodiscard]] std::int64_t size() const {
    return static_cast<std::int64_t>(channels) * height * width;
  }
  bool operator==(const Shape&) const = default;
};

/// C x H x W array stored channel-major, row-major within a channel.
struct ImageTensor {
  Shape shape;
  Vector data;

  ImageTensor() = default;
  ImageTensor(Shape s, Vector d);
  static ImageTensor zeros(Shape s);

  [[nodiscard]] double& at(int c, int i, int j) {
    return data[(static_cast<std::int64_t>(c) * shape.height + i) * shape.width + j];
  }
  [[nodiscard]] double at(int c, int i, int j) const {
    return data[(static_cast<std::int64_t>(c) * shape.height + i) * shape.width + j];
  }
  /// True when every entry lies in [0, 1].
  [[nodiscard]] bool in_unit_box() const;
};

enum class NormKind { L2, Linf };

std::string_view to_string(NormKind n);
NormKind parse_norm(std::string_view s);

}  // namespace sbo
