#include "sbo/types.hpp"

#include "sbo/error.hpp"

#include <string>

namespace sbo {

ImageTensor::ImageTensor(Shape s, Vector d) : shape(s), data(std::move(d)) {
  if (s.channels <= 0 || s.height <= 0 || s.width <= 0) {
    throw InvalidArgument("ImageTensor: non-positive dimension");
  }
  if (data.size() != s.size()) {
    throw InvalidArgument("ImageTensor: data length " + std::to_string(data.size()) +
                          " does not match shape size " + std::to_string(s.size()));
  }
}

ImageTensor ImageTensor::zeros(Shape s) { return ImageTensor(s, Vector::Zero(s.size())); }

bool ImageTensor::in_unit_box() const {
  return data.size() == 0 || (data.minCoeff() >= 0.0 && data.maxCoeff() <= 1.0);
}

std::string_view to_string(NormKind n) { return n == NormKind::L2 ? "L2" : "Linf"; }

NormKind parse_norm(std::string_view s) {
  if (s == "L2" || s == "l2") return NormKind::L2;
  if (s == "Linf" || s == "linf" || s == "LINF") return NormKind::Linf;
  throw InvalidArgument("unknown norm '" + std::string(s) + "'");
}

}  // namespace sbo
