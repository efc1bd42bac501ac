#include "sbo/oracle.hpp"

#include "sbo/binary_io.hpp"
#include "sbo/error.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <string>

namespace sbo {
namespace {

void check_shape(const ImageTensor& image, Shape expected, const char* who) {
  if (!(image.shape == expected)) throw InvalidArgument(std::string(who) + ": image shape mismatch");
}

enum ModelKind : std::uint32_t { kLinear = 1, kMlp = 2, kBall = 3 };

Matrix read_matrix(std::istream& is, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const float f = binio::read_le<float>(is, "weights");
      if (!std::isfinite(f)) throw FormatError("non-finite weight");
      m(r, c) = f;
    }
  }
  return m;
}

Vector read_vector(std::istream& is, Eigen::Index n) { return read_matrix(is, n, 1).col(0); }

void write_matrix(std::ostream& os, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) binio::write_le(os, static_cast<float>(m(r, c)));
  }
}

}  // namespace

Vector Classifier::logits(const ImageTensor&) {
  throw CapabilityError("oracle does not support soft-label queries");
}

Label argmax(const Vector& v) {
  if (v.size() == 0) throw InvalidArgument("argmax of empty vector");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<Label>(best);
}

LinearClassifier::LinearClassifier(Shape shape, Matrix weights, Vector bias)
    : shape_(shape), weights_(std::move(weights)), bias_(std::move(bias)) {
  if (weights_.cols() != shape_.size() || weights_.rows() != bias_.size() || bias_.size() < 2) {
    throw InvalidArgument("LinearClassifier: inconsistent dimensions");
  }
}

Vector LinearClassifier::logits(const ImageTensor& image) {
  check_shape(image, shape_, "LinearClassifier");
  return weights_ * image.data + bias_;
}

Label LinearClassifier::predict(const ImageTensor& image) { return argmax(logits(image)); }

MlpClassifier::MlpClassifier(Shape shape, Matrix w1, Vector b1, Matrix w2, Vector b2)
    : shape_(shape), w1_(std::move(w1)), b1_(std::move(b1)), w2_(std::move(w2)), b2_(std::move(b2)) {
  if (w1_.cols() != shape_.size() || w1_.rows() != b1_.size() || w2_.cols() != b1_.size() ||
      w2_.rows() != b2_.size() || b2_.size() < 2) {
    throw InvalidArgument("MlpClassifier: inconsistent dimensions");
  }
}

Vector MlpClassifier::logits(const ImageTensor& image) {
  check_shape(image, shape_, "MlpClassifier");
  const Vector hidden = (w1_ * image.data + b1_).cwiseMax(0.0);
  return w2_ * hidden + b2_;
}

Label MlpClassifier::predict(const ImageTensor& image) { return argmax(logits(image)); }

BallClassifier::BallClassifier(Shape shape, Vector center, double radius)
    : shape_(shape), center_(std::move(center)), radius_(radius) {
  if (center_.size() != shape_.size()) throw InvalidArgument("BallClassifier: center size mismatch");
  if (!(radius_ > 0.0)) throw InvalidArgument("BallClassifier: radius must be positive");
}

Vector BallClassifier::logits(const ImageTensor& image) {
  check_shape(image, shape_, "BallClassifier");
  const double dist = (image.data - center_).norm();
  Vector out(2);
  out << radius_ - dist, dist - radius_;
  return out;
}

Label BallClassifier::predict(const ImageTensor& image) { return argmax(logits(image)); }

double BallClassifier::linf_margin() const {
  return radius_ / std::sqrt(static_cast<double>(shape_.size()));
}

FunctionClassifier::FunctionClassifier(Shape shape, int classes, HardFn hard, SoftFn soft)
    : shape_(shape), classes_(classes), hard_(std::move(hard)), soft_(std::move(soft)) {
  if (classes_ < 2) throw InvalidArgument("FunctionClassifier: need at least 2 classes");
  if (!hard_) throw InvalidArgument("FunctionClassifier: hard-label function required");
}

Label FunctionClassifier::predict(const ImageTensor& image) { return hard_(image); }

Vector FunctionClassifier::logits(const ImageTensor& image) {
  if (!soft_) return Classifier::logits(image);
  return soft_(image);
}

std::unique_ptr<Classifier> load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open model file " + path.string());
  binio::expect_magic(is, "SBO1");
  const auto kind = binio::read_le<std::uint32_t>(is, "kind");
  Shape s;
  s.channels = static_cast<int>(binio::read_le<std::uint32_t>(is, "channels"));
  s.height = static_cast<int>(binio::read_le<std::uint32_t>(is, "height"));
  s.width = static_cast<int>(binio::read_le<std::uint32_t>(is, "width"));
  const auto classes = binio::read_le<std::uint32_t>(is, "classes");
  const auto hidden = binio::read_le<std::uint32_t>(is, "hidden");
  if (s.channels < 1 || s.height < 1 || s.width < 1 || s.size() > (1LL << 28)) {
    throw FormatError("model file: bad input shape");
  }
  if (classes < 2 || classes > 65535) throw FormatError("model file: bad class count");
  const Eigen::Index dim = s.size();
  switch (kind) {
    case kLinear: {
      Matrix w = read_matrix(is, classes, dim);
      Vector b = read_vector(is, classes);
      return std::make_unique<LinearClassifier>(s, std::move(w), std::move(b));
    }
    case kMlp: {
      if (hidden < 1 || hidden > (1u << 20)) throw FormatError("model file: bad hidden width");
      Matrix w1 = read_matrix(is, hidden, dim);
      Vector b1 = read_vector(is, hidden);
      Matrix w2 = read_matrix(is, classes, hidden);
      Vector b2 = read_vector(is, classes);
      return std::make_unique<MlpClassifier>(s, std::move(w1), std::move(b1), std::move(w2),
                                             std::move(b2));
    }
    case kBall: {
      if (classes != 2) throw FormatError("model file: ball model must have 2 classes");
      Vector c = read_vector(is, dim);
      const double r = read_vector(is, 1)[0];
      if (!(r > 0.0)) throw FormatError("model file: ball radius must be positive");
      return std::make_unique<BallClassifier>(s, std::move(c), r);
    }
    default:
      throw FormatError("model file: unknown model kind " + std::to_string(kind));
  }
}

void save_model(const std::filesystem::path& path, const Classifier& model) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write model file " + path.string());
  const Shape s = model.input_shape();
  auto header = [&](std::uint32_t kind, std::uint32_t hidden) {
    os.write("SBO1", 4);
    binio::write_le<std::uint32_t>(os, kind);
    binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.channels));
    binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.height));
    binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.width));
    binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(model.num_classes()));
    binio::write_le<std::uint32_t>(os, hidden);
  };
  if (const auto* lin = dynamic_cast<const LinearClassifier*>(&model)) {
    header(kLinear, 0);
    write_matrix(os, lin->weights());
    write_matrix(os, lin->bias());
  } else if (const auto* mlp = dynamic_cast<const MlpClassifier*>(&model)) {
    header(kMlp, static_cast<std::uint32_t>(mlp->b1().size()));
    write_matrix(os, mlp->w1());
    write_matrix(os, mlp->b1());
    write_matrix(os, mlp->w2());
    write_matrix(os, mlp->b2());
  } else if (const auto* ball = dynamic_cast<const BallClassifier*>(&model)) {
    header(kBall, 0);
    write_matrix(os, ball->center());
    binio::write_le(os, static_cast<float>(ball->radius()));
  } else {
    throw InvalidArgument("save_model: only built-in models can be serialized");
  }
  if (!os) throw FormatError("failed writing model file " + path.string());
}

QueryLedger::QueryLedger(std::int64_t budget) : budget_(budget) {
  if (budget_ < 1) throw InvalidArgument("QueryLedger: budget must be positive");
}

void QueryLedger::check() const {
  if (exhausted()) {
    throw BudgetExhausted("query budget of " + std::to_string(budget_) + " exhausted");
  }
}

void QueryLedger::consume() {
  check();
  ++used_;
}

Oracle::Oracle(Classifier& model, std::int64_t budget) : model_(model), ledger_(budget) {}

void Oracle::check_input(const ImageTensor& image) const {
  if (!(image.shape == model_.input_shape())) throw InvalidArgument("oracle: image shape mismatch");
  if (!image.in_unit_box()) throw InvalidArgument("oracle: image leaves [0, 1]");
}

Label Oracle::query_hard(const ImageTensor& image) {
  check_input(image);
  ledger_.check();
  const Label label = model_.predict(image);
  ledger_.consume();
  return label;
}

Vector Oracle::query_soft(const ImageTensor& image) {
  check_input(image);
  if (!model_.supports_soft()) throw CapabilityError("oracle does not support soft-label queries");
  ledger_.check();
  Vector out = model_.logits(image);
  ledger_.consume();
  return out;
}

std::string_view to_string(Feedback f) { return f == Feedback::HardLabel ? "hard" : "soft"; }

void ObjectiveSpec::validate(Label true_label, int num_classes) const {
  if (true_label < 0 || true_label >= num_classes) throw InvalidArgument("true label out of range");
  if (target) {
    if (*target < 0 || *target >= num_classes) throw InvalidArgument("target label out of range");
    if (*target == true_label) throw InvalidArgument("target label equals the true label");
  }
}

ImageTensor perturbed_image(const ImageTensor& x0, const Perturbation& delta) {
  if (!(x0.shape == delta.delta.shape)) throw InvalidArgument("perturbation shape mismatch");
  return ImageTensor(x0.shape, (x0.data + delta.delta.data).cwiseMax(0.0).cwiseMin(1.0));
}

ObjectiveValue objective(const ObjectiveSpec& spec, Oracle& oracle, const ImageTensor& x0, Label y0,
                         const Perturbation& delta) {
  const ImageTensor img = perturbed_image(x0, delta);
  ObjectiveValue out;
  if (spec.feedback == Feedback::HardLabel) {
    out.predicted = oracle.query_hard(img);
    out.success = spec.target ? out.predicted == *spec.target : out.predicted != y0;
    out.value = out.success ? 0.0 : -1.0;
    return out;
  }
  const Vector z = oracle.query_soft(img);
  out.predicted = argmax(z);
  const Label goal = spec.target.value_or(y0);
  double best_other = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    if (k != goal) best_other = std::max(best_other, z[k]);
  }
  out.value = spec.target ? z[goal] - best_other : best_other - z[goal];
  out.success = out.value > 0.0;
  return out;
}

}  // namespace sbo
