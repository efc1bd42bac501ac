#include "sbo/error.hpp"
#include "sbo/oracle.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace sbo;
using sbo::test::uniform_matrix;
using sbo::test::uniform_vector;

namespace {

const Shape kShape{1, 4, 4};

ImageTensor random_image(std::mt19937_64& rng, Shape s = kShape) {
  return {s, uniform_vector(rng, s.size(), 0.0, 1.0)};
}

Perturbation zero_delta(Shape s = kShape) { return {ImageTensor::zeros(s), NormKind::Linf}; }

// w0 = a * 1, w1 = 0: margin on a constant image x is a * x * D + b0 - b1.
LinearClassifier margin_model(double a, double b0, double b1) {
  Matrix w = Matrix::Zero(2, kShape.size());
  w.row(0).setConstant(a);
  return {kShape, w, (Vector(2) << b0, b1).finished()};
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("sbo_test_oracle_" + name);
}

}  // namespace

TEST_CASE("argmax resolves ties to the lowest index") {
  CHECK(argmax((Vector(3) << 1.0, 3.0, 3.0).finished()) == 1);
  CHECK(argmax((Vector(2) << 0.0, 0.0).finished()) == 0);
}

TEST_CASE("linear classifier labels and logits") {
  std::mt19937_64 rng(1);
  const Matrix w = uniform_matrix(rng, 3, kShape.size());
  const Vector b = uniform_vector(rng, 3);
  LinearClassifier model(kShape, w, b);
  for (int t = 0; t < 100; ++t) {
    const ImageTensor x = random_image(rng);
    const Vector z = model.logits(x);
    CHECK((z - (w * x.data + b)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(model.predict(x) == argmax(z));
    CHECK(model.predict(x) == model.predict(x));
  }
  CHECK_THROWS_AS(LinearClassifier(kShape, Matrix::Zero(2, 3), Vector::Zero(2)), InvalidArgument);
}

TEST_CASE("two-class linear model follows the sign of its margin") {
  LinearClassifier m = margin_model(1.0, -8.0, 0.0);
  CHECK(m.predict({kShape, Vector::Constant(16, 0.6)}) == 0);  // 9.6 - 8 > 0
  CHECK(m.predict({kShape, Vector::Constant(16, 0.4)}) == 1);  // 6.4 - 8 < 0
}

TEST_CASE("query ledger accounting") {
  QueryLedger l(2);
  l.consume();
  l.consume();
  CHECK(l.exhausted());
  CHECK_THROWS_AS(l.check(), BudgetExhausted);
  CHECK_THROWS_AS(l.consume(), BudgetExhausted);
  CHECK(l.used() == 2);
  CHECK_THROWS_AS(QueryLedger(0), InvalidArgument);

  std::mt19937_64 rng(2);
  LinearClassifier model = margin_model(1.0, 0.0, 0.0);
  Oracle o(model, 3);
  for (int i = 0; i < 3; ++i) o.query_hard(random_image(rng));
  CHECK_THROWS_AS(o.query_hard(random_image(rng)), BudgetExhausted);
  CHECK(o.ledger().used() == 3);
}

TEST_CASE("oracle input validation does not consume budget") {
  LinearClassifier model = margin_model(1.0, 0.0, 0.0);
  Oracle o(model, 5);
  CHECK_THROWS_AS(o.query_hard({Shape{1, 2, 2}, Vector::Zero(4)}), InvalidArgument);
  CHECK_THROWS_AS(o.query_hard({kShape, Vector::Constant(16, 1.5)}), InvalidArgument);
  CHECK(o.ledger().used() == 0);
}

TEST_CASE("soft queries on a hard-only classifier") {
  FunctionClassifier hard_only(kShape, 2, [](const ImageTensor&) { return 0; });
  CHECK_FALSE(hard_only.supports_soft());
  Oracle o(hard_only, 4);
  CHECK_THROWS_AS(o.query_soft(ImageTensor::zeros(kShape)), CapabilityError);
  CHECK(o.ledger().used() == 0);
  ObjectiveSpec soft;
  soft.feedback = Feedback::SoftLabel;
  CHECK_THROWS_AS(objective(soft, o, ImageTensor::zeros(kShape), 0, zero_delta()), CapabilityError);
  CHECK(o.ledger().used() == 0);
}

TEST_CASE("hard-label objective") {
  LinearClassifier model = margin_model(1.0, -8.0, 0.0);
  Oracle o(model, 10);
  const ImageTensor x0{kShape, Vector::Constant(16, 0.6)};
  const ObjectiveSpec spec;
  const ObjectiveValue none = objective(spec, o, x0, 0, zero_delta());
  CHECK(none.value == -1.0);
  CHECK_FALSE(none.success);
  Perturbation flip{ImageTensor{kShape, Vector::Constant(16, -0.2)}, NormKind::Linf};
  const ObjectiveValue hit = objective(spec, o, x0, 0, flip);
  CHECK(hit.value == 0.0);
  CHECK(hit.success);
  CHECK(hit.predicted == 1);
  CHECK(o.ledger().used() == 2);
}

TEST_CASE("soft-label objective is the analytic margin") {
  // margin at x = 0.6: 0.5 * 0.6 * 16 + 1 - 2 = 3.8, so the attack value is -3.8.
  LinearClassifier model = margin_model(0.5, 1.0, 2.0);
  Oracle o(model, 10);
  const ImageTensor x0{kShape, Vector::Constant(16, 0.6)};
  ObjectiveSpec spec;
  spec.feedback = Feedback::SoftLabel;
  const ObjectiveValue v = objective(spec, o, x0, 0, zero_delta());
  CHECK(v.value == doctest::Approx(-3.8).epsilon(1e-12));
  CHECK_FALSE(v.success);
  Perturbation down{ImageTensor{kShape, Vector::Constant(16, -0.5)}, NormKind::Linf};
  // margin at 0.1: 0.8 + 1 - 2 = -0.2
  const ObjectiveValue w = objective(spec, o, x0, 0, down);
  CHECK(w.value == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(w.success);
}

TEST_CASE("targeted objective") {
  std::mt19937_64 rng(4);
  const Matrix w = uniform_matrix(rng, 3, kShape.size());
  LinearClassifier model(kShape, w, Vector::Zero(3));
  ObjectiveSpec spec;
  spec.target = 0;
  CHECK_THROWS_AS(spec.validate(0, 3), InvalidArgument);
  CHECK_THROWS_AS(spec.validate(1, 0), InvalidArgument);
  spec.target = 5;
  CHECK_THROWS_AS(spec.validate(1, 3), InvalidArgument);
  spec.target = 2;
  CHECK_NOTHROW(spec.validate(1, 3));
  Oracle o(model, 1000);
  for (int t = 0; t < 100; ++t) {
    const ImageTensor x = random_image(rng);
    const ObjectiveValue hv = objective(spec, o, x, 1, zero_delta());
    CHECK(hv.success == (model.predict(x) == 2));
  }
}

TEST_CASE("hard success agrees with soft margin sign") {
  std::mt19937_64 rng(5);
  MlpClassifier model(kShape, uniform_matrix(rng, 8, 16), uniform_vector(rng, 8), uniform_matrix(rng, 3, 8),
                      uniform_vector(rng, 3));
  Oracle o(model, 100000);
  ObjectiveSpec hard, soft;
  soft.feedback = Feedback::SoftLabel;
  for (int t = 0; t < 200; ++t) {
    const ImageTensor x = random_image(rng);
    Perturbation d{ImageTensor{kShape, uniform_vector(rng, 16, -0.3, 0.3)}, NormKind::Linf};
    const Label y0 = t % 3;
    const ObjectiveValue h = objective(hard, o, x, y0, d);
    const ObjectiveValue s = objective(soft, o, x, y0, d);
    CHECK((h.value == 0.0 || h.value == -1.0));
    CHECK(h.success == s.success);
    CHECK(s.success == (s.value > 0));
  }
  CHECK(o.ledger().used() == 400);
}

TEST_CASE("perturbed images are clamped into the unit box") {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 50; ++t) {
    const ImageTensor x = random_image(rng);
    Perturbation d{ImageTensor{kShape, uniform_vector(rng, 16, -2, 2)}, NormKind::Linf};
    const ImageTensor y = perturbed_image(x, d);
    CHECK(y.in_unit_box());
    CHECK(((y.data - x.data).array().abs() <= d.delta.data.array().abs() + 1e-15).all());
  }
}

TEST_CASE("ball classifier margin") {
  std::mt19937_64 rng(7);
  const Vector center = uniform_vector(rng, 16, 0.3, 0.7);
  const double m = 0.02;
  BallClassifier ball(kShape, center, m * 4.0);
  CHECK(ball.linf_margin() == doctest::Approx(m));
  const ImageTensor x0{kShape, center};
  CHECK(ball.predict(x0) == 0);
  Vector sign(16);
  for (int i = 0; i < 16; ++i) sign[i] = (i % 2) ? 1.0 : -1.0;
  CHECK(ball.predict({kShape, center + 1.01 * m * sign}) == 1);
  CHECK(ball.predict({kShape, center + 0.99 * m * sign}) == 0);
  for (int t = 0; t < 100; ++t)
    CHECK(ball.predict({kShape, center + uniform_vector(rng, 16, -0.99 * m, 0.99 * m)}) == 0);
  const Vector z = ball.logits(x0);
  CHECK(z[0] == doctest::Approx(m * 4.0));
  CHECK(z[1] == doctest::Approx(-m * 4.0));
}

TEST_CASE("model files round trip") {
  std::mt19937_64 rng(8);
  // Float32 storage: start from values that are exactly representable.
  auto f32 = [](Matrix m) { return m.cast<float>().cast<double>().eval(); };
  std::vector<std::unique_ptr<Classifier>> models;
  models.push_back(std::make_unique<LinearClassifier>(kShape, f32(uniform_matrix(rng, 3, 16)),
                                                      f32(uniform_matrix(rng, 3, 1)).col(0)));
  models.push_back(std::make_unique<MlpClassifier>(kShape, f32(uniform_matrix(rng, 5, 16)),
                                                   f32(uniform_matrix(rng, 5, 1)).col(0),
                                                   f32(uniform_matrix(rng, 4, 5)), f32(uniform_matrix(rng, 4, 1)).col(0)));
  models.push_back(std::make_unique<BallClassifier>(kShape, f32(uniform_matrix(rng, 16, 1, 0, 1)).col(0), 0.5));
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto path = temp_file("model" + std::to_string(i));
    save_model(path, *models[i]);
    const auto back = load_model(path);
    CHECK(back->num_classes() == models[i]->num_classes());
    CHECK(back->input_shape() == kShape);
    for (int t = 0; t < 20; ++t) {
      const ImageTensor x = random_image(rng);
      CHECK(back->predict(x) == models[i]->predict(x));
      CHECK((back->logits(x) - models[i]->logits(x)).cwiseAbs().maxCoeff() < 1e-6);
    }
    std::filesystem::remove(path);
  }
}

TEST_CASE("malformed model files") {
  const auto bad = temp_file("bad");
  {
    std::ofstream f(bad, std::ios::binary);
    f << "NOPE1234";
  }
  CHECK_THROWS_AS(load_model(bad), FormatError);

  LinearClassifier m = margin_model(1.0, 0.0, 0.0);
  const auto good = temp_file("trunc");
  save_model(good, m);
  const auto size = std::filesystem::file_size(good);
  std::filesystem::resize_file(good, size - 5);
  CHECK_THROWS_AS(load_model(good), FormatError);
  CHECK_THROWS(load_model(temp_file("missing")));
  std::filesystem::remove(bad);
  std::filesystem::remove(good);
}
