#pragma once

#include "sbo/subspace.hpp"
#include "sbo/types.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace sbo {

/// A K-class image classifier. Implementations are deterministic; argmax ties
/// resolve to the lowest class index.
class Classifier {
 public:
  virtual ~Classifier() = default;
  [[nodiscard]] virtual Shape input_shape() const = 0;
  [[nodiscard]] virtual int num_classes() const = 0;
  [[nodiscard]] virtual bool supports_soft() const = 0;
  virtual Label predict(const ImageTensor& image) = 0;
  /// Full output layer; CapabilityError unless supports_soft().
  virtual Vector logits(const ImageTensor& image);
};

/// Index of the largest entry, lowest index on ties.
Label argmax(const Vector& v);

/// logits = W x + b.
class LinearClassifier final : public Classifier {
 public:
  LinearClassifier(Shape shape, Matrix weights, Vector bias);
  [[nodiscard]] Shape input_shape() const override { return shape_; }
  [[nodiscard]] int num_classes() const override { return static_cast<int>(bias_.size()); }
  [[nodiscard]] bool supports_soft() const override { return true; }
  Label predict(const ImageTensor& image) override;
  Vector logits(const ImageTensor& image) override;
  [[nodiscard]] const Matrix& weights() const { return weights_; }
  [[nodiscard]] const Vector& bias() const { return bias_; }

 private:
  Shape shape_;
  Matrix weights_;
  Vector bias_;
};

/// logits = W2 relu(W1 x + b1) + b2.
class MlpClassifier final : public Classifier {
 public:
  MlpClassifier(Shape shape, Matrix w1, Vector b1, Matrix w2, Vector b2);
  [[nodiscard]] Shape input_shape() const override { return shape_; }
  [[nodiscard]] int num_classes() const override { return static_cast<int>(b2_.size()); }
  [[nodiscard]] bool supports_soft() const override { return true; }
  Label predict(const ImageTensor& image) override;
  Vector logits(const ImageTensor& image) override;
  [[nodiscard]] const Matrix& w1() const { return w1_; }
  [[nodiscard]] const Vector& b1() const { return b1_; }
  [[nodiscard]] const Matrix& w2() const { return w2_; }
  [[nodiscard]] const Vector& b2() const { return b2_; }

 private:
  Shape shape_;
  Matrix w1_;
  Vector b1_;
  Matrix w2_;
  Vector b2_;
};

/// Two concentric regions around `center`: class 0 when ||x - center||_2 <= radius,
/// class 1 outside. Logits are (radius - dist, dist - radius).
class BallClassifier final : public Classifier {
 public:
  BallClassifier(Shape shape, Vector center, double radius);
  [[nodiscard]] Shape input_shape() const override { return shape_; }
  [[nodiscard]] int num_classes() const override { return 2; }
  [[nodiscard]] bool supports_soft() const override { return true; }
  Label predict(const ImageTensor& image) override;
  Vector logits(const ImageTensor& image) override;
  [[nodiscard]] const Vector& center() const { return center_; }
  [[nodiscard]] double radius() const { return radius_; }

  /// Smallest ||delta||_inf that moves `center` across the boundary: radius / sqrt(D).
  [[nodiscard]] double linf_margin() const;

 private:
  Shape shape_;
  Vector center_;
  double radius_;
};

/// Classifier backed by a callable; hard-label only unless a logit function is given.
class FunctionClassifier final : public Classifier {
 public:
  using HardFn = std::function<Label(const ImageTensor&)>;
  using SoftFn = std::function<Vector(const ImageTensor&)>;
  FunctionClassifier(Shape shape, int classes, HardFn hard, SoftFn soft = {});
  [[nodiscard]] Shape input_shape() const override { return shape_; }
  [[nodiscard]] int num_classes() const override { return classes_; }
  [[nodiscard]] bool supports_soft() const override { return static_cast<bool>(soft_); }
  Label predict(const ImageTensor& image) override;
  Vector logits(const ImageTensor& image) override;

 private:
  Shape shape_;
  int classes_;
  HardFn hard_;
  SoftFn soft_;
};

/// Model weight files: magic "SBO1", then little-endian uint32 kind
/// (1 linear, 2 mlp, 3 ball), C, H, W, K, hidden, followed by float32 arrays.
std::unique_ptr<Classifier> load_model(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const Classifier& model);

/// Queries spent against a fixed budget.
class QueryLedger {
 public:
  explicit QueryLedger(std::int64_t budget);
  [[nodiscard]] std::int64_t used() const { return used_; }
  [[nodiscard]] std::int64_t budget() const { return budget_; }
  [[nodiscard]] std::int64_t remaining() const { return budget_ - used_; }
  [[nodiscard]] bool exhausted() const { return used_ >= budget_; }
  /// Throws BudgetExhausted when used == budget.
  void check() const;
  void consume();

 private:
  std::int64_t used_ = 0;
  std::int64_t budget_;
};

/// A classifier together with the ledger that meters it. A query is charged
/// only once the classifier has answered.
class Oracle {
 public:
  Oracle(Classifier& model, std::int64_t budget);
  Label query_hard(const ImageTensor& image);
  Vector query_soft(const ImageTensor& image);
  [[nodiscard]] const QueryLedger& ledger() const { return ledger_; }
  [[nodiscard]] Classifier& model() { return model_; }

 private:
  void check_input(const ImageTensor& image) const;
  Classifier& model_;
  QueryLedger ledger_;
};

enum class Feedback { HardLabel, SoftLabel };

std::string_view to_string(Feedback f);

/// Untargeted when `target` is empty.
struct ObjectiveSpec {
  std::optional<Label> target;
  Feedback feedback = Feedback::HardLabel;

  /// Targeted attacks need target != true label.
  void validate(Label true_label, int num_classes) const;
};

struct ObjectiveValue {
  double value = 0.0;
  bool success = false;
  /// Predicted class of the queried image.
  Label predicted = 0;
};

/// clamp(x0 + delta, 0, 1).
ImageTensor perturbed_image(const ImageTensor& x0, const Perturbation& delta);

/// One oracle query. Hard label: 0 on success, -1 otherwise. Soft label:
/// logit margin of the goal class, success iff > 0.
ObjectiveValue objective(const ObjectiveSpec& spec, Oracle& oracle, const ImageTensor& x0,
                         Label y0, const Perturbation& delta);

}  // namespace sbo
