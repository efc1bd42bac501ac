#include "sbo/attack.hpp"
#include "sbo/error.hpp"
#include "sbo/harness.hpp"
#include "sbo/remote.hpp"

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace sbo;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

ImageTensor to_image(const Array& a) {
  if (a.ndim() != 3) throw InvalidArgument("image must be a (C, H, W) array");
  const Shape s{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2))};
  Vector v(s.size());
  std::copy(a.data(), a.data() + s.size(), v.data());
  return {s, std::move(v)};
}

Array from_image(const ImageTensor& t) {
  Array out({t.shape.channels, t.shape.height, t.shape.width});
  std::copy(t.data.data(), t.data.data() + t.data.size(), out.mutable_data());
  return out;
}

Shape to_shape(const std::tuple<int, int, int>& s) { return {std::get<0>(s), std::get<1>(s), std::get<2>(s)}; }

py::object json_to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

py::dict result_to_dict(const AttackResult& r) {
  py::dict d;
  d["success"] = r.success;
  d["queries_used"] = r.queries_used;
  d["final_coeffs"] = r.final_coeffs;
  d["final_delta"] = from_image(r.final_delta.delta);
  std::vector<double> trace;
  for (const auto& p : r.trace) trace.push_back(p.value);
  d["trace"] = trace;
  d["adversarial_label"] = r.adversarial_label;
  d["gp_rows"] = r.gp_rows;
  d["hyper_warnings"] = r.hyper_warnings;
  d["error"] = r.error;
  return d;
}

AttackConfig make_config(const std::string& norm, double eps, std::int64_t budget, int rd_side,
                         std::optional<std::string> basis, int n_init, std::optional<std::string> init,
                         std::optional<int> target, const std::string& feedback,
                         const std::string& acquisition, std::uint64_t seed) {
  AttackConfig c = AttackConfig::defaults_for(parse_norm(norm));
  c.eps = eps;
  c.budget = budget;
  c.low_dim_side = rd_side;
  if (basis) c.basis_mode = parse_basis(*basis);
  c.n_init = n_init;
  if (init) c.init_dist = parse_init(*init);
  c.objective.target = target;
  if (feedback == "soft") c.objective.feedback = Feedback::SoftLabel;
  else if (feedback != "hard") throw InvalidArgument("feedback must be 'hard' or 'soft'");
  c.acquisition = parse_acquisition(acquisition);
  c.seed = seed;
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hard-label black-box attacks by Bayesian optimization over low-dimensional subspaces";
  m.attr("__version__") = kVersion;

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<BudgetExhausted>(m, "BudgetExhausted", base.ptr());
  py::register_exception<TransportError>(m, "TransportError", base.ptr());
  py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());
  py::register_exception<CapabilityError>(m, "CapabilityError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());

  // transforms and projections
  m.def("dft2", py::overload_cast<const ComplexMatrix&>(&dft2), py::arg("x"));
  m.def("idft2", &idft2, py::arg("spectrum"));
  m.def(
      "fft_embed",
      [](const Vector& c, const std::string& mode, int k, int channels, int d) {
        return from_image(fft_embed(c, {parse_basis(mode), k, channels, d}).delta);
      },
      py::arg("coeffs"), py::arg("mode"), py::arg("k"), py::arg("channels"), py::arg("d"));
  m.def(
      "nni_upsample",
      [](const Vector& c, int k, int channels, int d) {
        return from_image(nni_upsample(c, {BasisMode::NNI, k, channels, d}).delta);
      },
      py::arg("coeffs"), py::arg("k"), py::arg("channels"), py::arg("d"));
  m.def("project_l2", &project_l2, py::arg("coeffs"), py::arg("eps"));
  m.def("project_linf", &project_linf, py::arg("coeffs"), py::arg("eps"));

  // GP surrogate
  py::class_<GPState>(m, "GP")
      .def_property_readonly("size", &GPState::size)
      .def_property_readonly("dim", &GPState::dim)
      .def_property_readonly("noise_variance", [](const GPState& g) { return g.hyper().noise_variance; })
      .def("posterior",
           [](const GPState& g, const Vector& x) {
             const Posterior p = gp_posterior(g, x);
             return py::make_tuple(p.mean, p.variance);
           })
      .def("log_marginal_likelihood", [](const GPState& g) {
        const LogLikelihood l = log_marginal_likelihood(g);
        return py::make_tuple(l.value, l.grad);
      });
  m.def(
      "gp_fit",
      [](const Matrix& x, const Vector& v, double signal_variance, const Vector& lengthscales, double noise,
         double mean) { return gp_fit(x, v, {signal_variance, lengthscales, noise}, mean); },
      py::arg("inputs"), py::arg("values"), py::arg("signal_variance"), py::arg("lengthscales"),
      py::arg("noise_variance") = kDefaultNoise, py::arg("mean") = 0.0);
  m.def(
      "matern52",
      [](const Vector& a, const Vector& b, double s2, const Vector& ls) { return matern52(a, b, {s2, ls, kDefaultNoise}); },
      py::arg("x"), py::arg("y"), py::arg("signal_variance"), py::arg("lengthscales"));
  m.def("expected_improvement", &expected_improvement, py::arg("mean"), py::arg("std"), py::arg("best"));

  // classifiers
  py::class_<Classifier, std::shared_ptr<Classifier>>(m, "Classifier")
      .def_property_readonly("num_classes", &Classifier::num_classes)
      .def_property_readonly("input_shape",
                             [](const Classifier& c) {
                               const Shape s = c.input_shape();
                               return py::make_tuple(s.channels, s.height, s.width);
                             })
      .def_property_readonly("supports_soft", &Classifier::supports_soft)
      .def("predict", [](Classifier& c, const Array& x) { return c.predict(to_image(x)); })
      .def("logits", [](Classifier& c, const Array& x) { return c.logits(to_image(x)); });
  m.def(
      "linear_classifier",
      [](std::tuple<int, int, int> shape, const Matrix& w, const Vector& b) -> std::shared_ptr<Classifier> {
        return std::make_shared<LinearClassifier>(to_shape(shape), w, b);
      },
      py::arg("shape"), py::arg("weights"), py::arg("bias"));
  m.def(
      "ball_classifier",
      [](std::tuple<int, int, int> shape, const Vector& center, double radius) -> std::shared_ptr<Classifier> {
        return std::make_shared<BallClassifier>(to_shape(shape), center, radius);
      },
      py::arg("shape"), py::arg("center"), py::arg("radius"));
  m.def(
      "load_model", [](const std::filesystem::path& p) { return std::shared_ptr<Classifier>(load_model(p)); },
      py::arg("path"));
  m.def("save_model", [](const std::filesystem::path& p, const Classifier& c) { save_model(p, c); }, py::arg("path"),
        py::arg("model"));
  m.def(
      "connect",
      [](const std::string& address, double timeout_s) {
        return std::shared_ptr<Classifier>(
            remote_oracle_connect(address, std::chrono::milliseconds(static_cast<long>(timeout_s * 1000))));
      },
      py::arg("address"), py::arg("timeout") = 10.0);

  // attacks
  auto attack = [](bool bayes) {
    return [bayes](const Array& x0, int y0, Classifier& model, const std::string& norm, double eps,
                   std::int64_t budget, int rd_side, std::optional<std::string> basis, int n_init,
                   std::optional<std::string> init, std::optional<int> target, const std::string& feedback,
                   const std::string& acquisition, std::uint64_t seed) {
      const AttackConfig c =
          make_config(norm, eps, budget, rd_side, basis, n_init, init, target, feedback, acquisition, seed);
      AttackResult r;
      {
        py::gil_scoped_release release;
        r = bayes ? bayes_attack(to_image(x0), y0, c, model) : random_search_attack(to_image(x0), y0, c, model);
      }
      return result_to_dict(r);
    };
  };
  const auto attack_args = [](py::module_& mod, const char* name, auto fn, const char* doc) {
    mod.def(name, fn, doc, py::arg("x0"), py::arg("label"), py::arg("model"), py::arg("norm") = "Linf",
            py::arg("eps") = 0.05, py::arg("budget") = 1000, py::arg("rd_side") = 4, py::arg("basis") = py::none(),
            py::arg("n_init") = 5, py::arg("init") = py::none(), py::arg("target") = py::none(),
            py::arg("feedback") = "hard", py::arg("acquisition") = "EI", py::arg("seed") = 0);
  };
  attack_args(m, "bayes_attack", attack(true), "Bayesian-optimization attack on one image.");
  attack_args(m, "random_search_attack", attack(false), "Random-search baseline on one image.");

  // campaigns
  m.def(
      "run_campaign",
      [](const std::filesystem::path& dataset, const std::string& oracle, const std::string& norm, double eps,
         std::int64_t budget, int rd_side, std::int64_t count, int workers, std::uint64_t seed,
         const std::string& method, std::optional<std::string> output) {
        Campaign c;
        c.dataset_path = dataset;
        c.oracle_spec = oracle;
        c.config = make_config(norm, eps, budget, rd_side, std::nullopt, 5, std::nullopt, std::nullopt, "hard", "EI",
                               seed);
        c.image_count = count;
        c.workers = workers;
        c.method = method == "random" ? AttackMethod::RandomSearch : AttackMethod::Bayes;
        if (output) c.output_path = *output;
        CampaignReport r;
        {
          py::gil_scoped_release release;
          r = run_campaign(c);
        }
        return json_to_py(to_json(r));
      },
      py::arg("dataset"), py::arg("oracle"), py::arg("norm") = "Linf", py::arg("eps") = 0.05,
      py::arg("budget") = 1000, py::arg("rd_side") = 4, py::arg("count") = 0, py::arg("workers") = 1,
      py::arg("seed") = 0, py::arg("method") = "bayes", py::arg("output") = py::none());
  m.def(
      "save_dataset",
      [](const std::filesystem::path& p, const std::vector<Array>& images, const std::vector<int>& labels,
         int num_classes) {
        if (images.size() != labels.size()) throw InvalidArgument("images and labels differ in length");
        Dataset d;
        d.num_classes = num_classes;
        for (std::size_t i = 0; i < images.size(); ++i) d.items.push_back({to_image(images[i]), labels[i]});
        if (!d.items.empty()) d.shape = d.items.front().image.shape;
        save_dataset(p, d);
      },
      py::arg("path"), py::arg("images"), py::arg("labels"), py::arg("num_classes"));
  m.def(
      "load_dataset",
      [](const std::filesystem::path& p) {
        const Dataset d = load_dataset(p);
        py::list images;
        std::vector<int> labels;
        for (const auto& it : d.items) {
          images.append(from_image(it.image));
          labels.push_back(it.label);
        }
        return py::make_tuple(images, labels, d.num_classes);
      },
      py::arg("path"));
}
