#include "sbo/harness.hpp"

#include "sbo/binary_io.hpp"
#include "sbo/error.hpp"
#include "sbo/remote.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace sbo {

using json = nlohmann::json;

Dataset load_dataset(const std::filesystem::path& path, std::optional<Shape> expected_shape) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open dataset " + path.string());
  if (is.peek() == std::ifstream::traits_type::eof()) throw FormatError("empty dataset file " + path.string());
  binio::expect_magic(is, "SBD1");
  const auto count = binio::read_le<std::uint32_t>(is, "count");
  Dataset ds;
  ds.shape.channels = static_cast<int>(binio::read_le<std::uint32_t>(is, "channels"));
  ds.shape.height = static_cast<int>(binio::read_le<std::uint32_t>(is, "height"));
  ds.shape.width = static_cast<int>(binio::read_le<std::uint32_t>(is, "width"));
  ds.num_classes = static_cast<int>(binio::read_le<std::uint32_t>(is, "classes"));
  if (ds.shape.channels < 1 || ds.shape.height < 1 || ds.shape.width < 1 ||
      ds.shape.size() > (1LL << 28)) {
    throw FormatError("dataset header: bad image shape");
  }
  if (ds.num_classes < 2 || ds.num_classes > 65536) throw FormatError("dataset header: bad class count");
  if (expected_shape && !(*expected_shape == ds.shape)) {
    throw FormatError("dataset header: shape does not match the model input");
  }
  if (count == 0) throw FormatError("dataset contains no images");

  const Eigen::Index dim = ds.shape.size();
  ds.items.resize(count);
  for (std::uint32_t n = 0; n < count; ++n) {
    Vector data(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      const float f = binio::read_le<float>(is, "pixels");
      if (!(f >= 0.0f && f <= 1.0f)) {
        std::ostringstream os;
        os << "dataset: pixel " << i << " of image " << n << " is " << f << ", outside [0, 1]";
        throw FormatError(os.str());
      }
      data[i] = f;
    }
    ds.items[n].image = ImageTensor(ds.shape, std::move(data));
  }
  for (std::uint32_t n = 0; n < count; ++n) {
    const auto label = binio::read_le<std::uint16_t>(is, "labels");
    if (label >= ds.num_classes) {
      throw FormatError("dataset: label " + std::to_string(label) + " of image " + std::to_string(n) +
                        " exceeds class count");
    }
    ds.items[n].label = label;
  }
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  if (dataset.items.empty()) throw InvalidArgument("save_dataset: empty dataset");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot write dataset " + path.string());
  os.write("SBD1", 4);
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(dataset.items.size()));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(dataset.shape.channels));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(dataset.shape.height));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(dataset.shape.width));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(dataset.num_classes));
  for (const auto& item : dataset.items) {
    if (!(item.image.shape == dataset.shape)) throw InvalidArgument("save_dataset: image shape mismatch");
    for (Eigen::Index i = 0; i < item.image.data.size(); ++i) {
      binio::write_le(os, static_cast<float>(item.image.data[i]));
    }
  }
  for (const auto& item : dataset.items) binio::write_le(os, static_cast<std::uint16_t>(item.label));
  if (!os) throw FormatError("failed writing dataset " + path.string());
}

ClassifierFactory make_classifier_factory(const std::string& oracle_spec) {
  if (oracle_spec.rfind("tcp:", 0) == 0) {
    return [oracle_spec] { return std::unique_ptr<Classifier>(remote_oracle_connect(oracle_spec)); };
  }
  std::string path = oracle_spec;
  if (path.rfind("file:", 0) == 0) path = path.substr(5);
  if (path.empty()) throw InvalidArgument("empty oracle spec");
  return [path] { return load_model(path); };
}

std::string_view to_string(ImageStatus s) {
  switch (s) {
    case ImageStatus::Attacked: return "attacked";
    case ImageStatus::Misclassified: return "misclassified";
    case ImageStatus::Errored: return "errored";
  }
  return "?";
}

namespace {

ImageStatus parse_status(const std::string& s) {
  if (s == "attacked") return ImageStatus::Attacked;
  if (s == "misclassified") return ImageStatus::Misclassified;
  if (s == "errored") return ImageStatus::Errored;
  throw FormatError("unknown image status '" + s + "'");
}

bool is_cross_mode(const AttackConfig& c) {
  return (c.basis_mode == BasisMode::NNI) != (c.norm == NormKind::Linf);
}

}  // namespace

std::uint64_t image_seed(std::uint64_t base, std::int64_t index) {
  // splitmix64 finalizer over base + golden-ratio stride: a bijection in index.
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void aggregate(CampaignReport& report) {
  report.attacked = 0;
  report.successes = 0;
  report.errored = 0;
  std::vector<std::int64_t> queries;
  for (const auto& im : report.images) {
    if (im.status == ImageStatus::Errored) ++report.errored;
    if (im.status != ImageStatus::Attacked) continue;
    ++report.attacked;
    if (im.success) {
      ++report.successes;
      queries.push_back(im.queries_used);
    }
  }
  report.degenerate = report.attacked == 0;
  report.success_rate =
      report.attacked == 0 ? 0.0 : static_cast<double>(report.successes) / static_cast<double>(report.attacked);
  report.avg_queries_on_success = 0.0;
  report.median_queries_on_success = 0.0;
  if (!queries.empty()) {
    double sum = 0.0;
    for (auto q : queries) sum += static_cast<double>(q);
    report.avg_queries_on_success = sum / static_cast<double>(queries.size());
    std::sort(queries.begin(), queries.end());
    const std::size_t m = queries.size() / 2;
    report.median_queries_on_success =
        queries.size() % 2 == 1 ? static_cast<double>(queries[m])
                                : 0.5 * static_cast<double>(queries[m - 1] + queries[m]);
  }
}

json config_to_json(const AttackConfig& c) {
  json j;
  j["norm"] = std::string(to_string(c.norm));
  j["eps"] = c.eps;
  j["budget"] = c.budget;
  j["low_dim_side"] = c.low_dim_side;
  j["basis_mode"] = std::string(to_string(c.basis_mode));
  j["n_init"] = c.n_init;
  j["init_dist"] = std::string(to_string(c.init_dist));
  j["target"] = c.objective.target ? json(*c.objective.target) : json(nullptr);
  j["feedback"] = std::string(to_string(c.objective.feedback));
  j["acquisition"] = std::string(to_string(c.acquisition));
  j["ucb_beta"] = c.ucb_beta;
  j["seed"] = c.seed;
  j["gp"] = {{"refit_every", c.gp.refit_every},
             {"hyper_restarts", c.gp.hyper_restarts},
             {"acq_restarts", c.gp.acquisition.restarts},
             {"lbfgs_memory", c.gp.acquisition.lbfgs.memory},
             {"lbfgs_max_iterations", c.gp.acquisition.lbfgs.max_iterations},
             {"lbfgs_grad_tol", c.gp.acquisition.lbfgs.grad_tol},
             {"noise_variance", c.gp.noise_variance}};
  return j;
}

AttackConfig config_from_json(const json& j) {
  try {
    AttackConfig c;
    c.norm = parse_norm(j.at("norm").get<std::string>());
    c.eps = j.at("eps").get<double>();
    c.budget = j.at("budget").get<std::int64_t>();
    c.low_dim_side = j.at("low_dim_side").get<int>();
    c.basis_mode = parse_basis(j.at("basis_mode").get<std::string>());
    c.n_init = j.at("n_init").get<int>();
    c.init_dist = parse_init(j.at("init_dist").get<std::string>());
    if (!j.at("target").is_null()) c.objective.target = j["target"].get<Label>();
    c.objective.feedback = j.at("feedback").get<std::string>() == "soft" ? Feedback::SoftLabel : Feedback::HardLabel;
    c.acquisition = parse_acquisition(j.at("acquisition").get<std::string>());
    c.ucb_beta = j.at("ucb_beta").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto& g = j.at("gp");
    c.gp.refit_every = g.at("refit_every").get<int>();
    c.gp.hyper_restarts = g.at("hyper_restarts").get<int>();
    c.gp.acquisition.restarts = g.at("acq_restarts").get<int>();
    c.gp.acquisition.lbfgs.memory = g.at("lbfgs_memory").get<int>();
    c.gp.acquisition.lbfgs.max_iterations = g.at("lbfgs_max_iterations").get<int>();
    c.gp.acquisition.lbfgs.grad_tol = g.at("lbfgs_grad_tol").get<double>();
    c.gp.noise_variance = g.at("noise_variance").get<double>();
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad config JSON: ") + e.what());
  }
}

json images_to_json(const std::vector<ImageSummary>& images) {
  json arr = json::array();
  for (const auto& im : images) {
    json j;
    j["index"] = im.index;
    j["label"] = im.label;
    j["seed"] = im.seed;
    j["status"] = std::string(to_string(im.status));
    j["success"] = im.success;
    j["queries_used"] = im.queries_used;
    j["adversarial_label"] = im.adversarial_label ? json(*im.adversarial_label) : json(nullptr);
    j["target"] = im.target ? json(*im.target) : json(nullptr);
    j["gp_rows"] = im.gp_rows;
    j["perturbation_linf"] = im.perturbation_linf;
    j["perturbation_l2"] = im.perturbation_l2;
    j["final_value"] = im.final_value;
    j["error"] = im.error;
    arr.push_back(std::move(j));
  }
  return arr;
}

json to_json(const CampaignReport& r) {
  json j;
  j["schema"] = r.schema;
  j["version"] = r.version;
  j["attacked"] = r.attacked;
  j["successes"] = r.successes;
  j["errored"] = r.errored;
  j["success_rate"] = r.success_rate;
  j["avg_queries_on_success"] = r.avg_queries_on_success;
  j["median_queries_on_success"] = r.median_queries_on_success;
  j["degenerate"] = r.degenerate;
  j["cross_mode"] = r.cross_mode;
  j["config"] = r.config;
  j["wall_clock_seconds"] = r.wall_clock_seconds;
  j["images"] = images_to_json(r.images);
  return j;
}

CampaignReport report_from_json(const json& j) {
  try {
    CampaignReport r;
    r.schema = j.at("schema").get<int>();
    if (r.schema != kReportSchema) throw FormatError("unsupported report schema " + std::to_string(r.schema));
    r.version = j.at("version").get<std::string>();
    r.attacked = j.at("attacked").get<std::int64_t>();
    r.successes = j.at("successes").get<std::int64_t>();
    r.errored = j.at("errored").get<std::int64_t>();
    r.success_rate = j.at("success_rate").get<double>();
    r.avg_queries_on_success = j.at("avg_queries_on_success").get<double>();
    r.median_queries_on_success = j.at("median_queries_on_success").get<double>();
    r.degenerate = j.at("degenerate").get<bool>();
    r.cross_mode = j.at("cross_mode").get<bool>();
    r.config = j.at("config");
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    for (const auto& ij : j.at("images")) {
      ImageSummary im;
      im.index = ij.at("index").get<std::int64_t>();
      im.label = ij.at("label").get<Label>();
      im.seed = ij.at("seed").get<std::uint64_t>();
      im.status = parse_status(ij.at("status").get<std::string>());
      im.success = ij.at("success").get<bool>();
      im.queries_used = ij.at("queries_used").get<std::int64_t>();
      if (!ij.at("adversarial_label").is_null()) im.adversarial_label = ij["adversarial_label"].get<Label>();
      if (!ij.at("target").is_null()) im.target = ij["target"].get<Label>();
      im.gp_rows = ij.at("gp_rows").get<std::int64_t>();
      im.perturbation_linf = ij.at("perturbation_linf").get<double>();
      im.perturbation_l2 = ij.at("perturbation_l2").get<double>();
      im.final_value = ij.at("final_value").get<double>();
      im.error = ij.at("error").get<std::string>();
      r.images.push_back(std::move(im));
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad report JSON: ") + e.what());
  }
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<TracePoint>& trace) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot write trace " + path.string());
  os << "query_index,objective_value,cumulative_best\n";
  os.precision(17);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& t : trace) {
    best = std::max(best, t.value);
    os << t.query_index << ',' << t.value << ',' << best << '\n';
  }
}

namespace {

ImageSummary attack_one(const Campaign& campaign, const LabeledImage& item, std::int64_t index,
                        Classifier& model) {
  ImageSummary s;
  s.index = index;
  s.label = item.label;
  s.seed = image_seed(campaign.config.seed, index);
  try {
    if (model.predict(item.image) != item.label) {
      s.status = ImageStatus::Misclassified;
      return s;
    }
    AttackConfig cfg = campaign.config;
    cfg.seed = s.seed;
    if (campaign.random_targets) {
      std::mt19937_64 trng(s.seed ^ 0x5DEECE66DULL);
      const int k = model.num_classes();
      Label t = std::uniform_int_distribution<Label>(0, k - 2)(trng);
      if (t >= item.label) ++t;
      cfg.objective.target = t;
    }
    s.target = cfg.objective.target;
    if (s.target && *s.target == item.label) {
      s.status = ImageStatus::Errored;
      s.error = "target label equals the true label";
      return s;
    }
    const AttackResult r = campaign.method == AttackMethod::Bayes
                               ? bayes_attack(item.image, item.label, cfg, model)
                               : random_search_attack(item.image, item.label, cfg, model);
    s.queries_used = r.queries_used;
    if (r.error) {
      s.status = ImageStatus::Errored;
      s.error = *r.error;
      return s;
    }
    s.success = r.success;
    s.adversarial_label = r.adversarial_label;
    s.gp_rows = r.gp_rows;
    if (r.final_delta.delta.data.size() > 0) {
      s.perturbation_linf = r.final_delta.delta.data.lpNorm<Eigen::Infinity>();
      s.perturbation_l2 = r.final_delta.delta.data.norm();
    }
    s.final_value = r.trace.empty() ? 0.0 : r.trace.back().value;
    if (!campaign.trace_dir.empty()) {
      write_trace_csv(campaign.trace_dir / ("image_" + std::to_string(index) + ".csv"), r.trace);
    }
  } catch (const TransportError& e) {
    s.status = ImageStatus::Errored;
    s.error = e.what();
  } catch (const ProtocolError& e) {
    s.status = ImageStatus::Errored;
    s.error = e.what();
  }
  return s;
}

}  // namespace

CampaignReport run_campaign(const Campaign& campaign, const Dataset& dataset,
                            const ClassifierFactory& factory) {
  campaign.config.validate();
  if (dataset.items.empty()) throw InvalidArgument("run_campaign: empty dataset");
  if (campaign.image_count < 0) throw InvalidArgument("run_campaign: negative image count");
  const auto total = static_cast<std::int64_t>(dataset.items.size());
  const std::int64_t count = campaign.image_count == 0 ? total : std::min(campaign.image_count, total);
  if (!campaign.trace_dir.empty()) std::filesystem::create_directories(campaign.trace_dir);

  const auto t0 = std::chrono::steady_clock::now();
  CampaignReport report;
  report.images.resize(static_cast<std::size_t>(count));
  std::atomic<std::int64_t> next{0};
  auto worker = [&] {
    std::unique_ptr<Classifier> model;
    std::string init_error;
    try {
      model = factory();
    } catch (const Error& e) {
      init_error = e.what();
    }
    for (std::int64_t i = next++; i < count; i = next++) {
      const auto& item = dataset.items[static_cast<std::size_t>(i)];
      if (!model) {
        ImageSummary s;
        s.index = i;
        s.label = item.label;
        s.seed = image_seed(campaign.config.seed, i);
        s.status = ImageStatus::Errored;
        s.error = init_error;
        report.images[static_cast<std::size_t>(i)] = std::move(s);
        continue;
      }
      report.images[static_cast<std::size_t>(i)] = attack_one(campaign, item, i, *model);
    }
  };
  const int workers = std::max(1, std::min<int>(campaign.workers, static_cast<int>(count)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  aggregate(report);
  report.cross_mode = is_cross_mode(campaign.config);
  report.config = config_to_json(campaign.config);
  report.config["method"] = campaign.method == AttackMethod::Bayes ? "bayes" : "random";
  report.config["random_targets"] = campaign.random_targets;
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!campaign.output_path.empty()) {
    std::ofstream os(campaign.output_path, std::ios::trunc);
    if (!os) throw FormatError("cannot write report " + campaign.output_path.string());
    os << to_json(report).dump(2) << '\n';
  }
  return report;
}

CampaignReport run_campaign(const Campaign& campaign) {
  const ClassifierFactory factory = make_classifier_factory(campaign.oracle_spec);
  std::optional<Shape> shape;
  {
    const auto probe = factory();
    shape = probe->input_shape();
  }
  const Dataset ds = load_dataset(campaign.dataset_path, shape);
  return run_campaign(campaign, ds, factory);
}

AttackConfig ConfigOverride::apply(const AttackConfig& base) const {
  AttackConfig c = base;
  if (basis_mode) c.basis_mode = *basis_mode;
  if (low_dim_side) c.low_dim_side = *low_dim_side;
  if (norm) c.norm = *norm;
  if (eps) c.eps = *eps;
  if (acquisition) c.acquisition = *acquisition;
  return c;
}

ConfigOverride ConfigOverride::parse(const std::string& text) {
  ConfigOverride o;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw InvalidArgument("override item '" + item + "' is not key=value");
    const std::string key = item.substr(0, eq);
    const std::string val = item.substr(eq + 1);
    try {
      if (key == "basis") o.basis_mode = parse_basis(val);
      else if (key == "rd" || key == "rd_side" || key == "low_dim_side") o.low_dim_side = std::stoi(val);
      else if (key == "norm") o.norm = parse_norm(val);
      else if (key == "eps") o.eps = std::stod(val);
      else if (key == "acq" || key == "acquisition") o.acquisition = parse_acquisition(val);
      else throw InvalidArgument("override key '" + key + "' is not sweepable");
    } catch (const std::logic_error&) {
      throw InvalidArgument("bad value in override item '" + item + "'");
    }
  }
  return o;
}

json ConfigOverride::to_json() const {
  json j = json::object();
  if (basis_mode) j["basis"] = std::string(sbo::to_string(*basis_mode));
  if (low_dim_side) j["rd"] = *low_dim_side;
  if (norm) j["norm"] = std::string(sbo::to_string(*norm));
  if (eps) j["eps"] = *eps;
  if (acquisition) j["acquisition"] = std::string(sbo::to_string(*acquisition));
  return j;
}

std::vector<CampaignReport> run_ablation(const Campaign& base, const std::vector<ConfigOverride>& sweep,
                                         const Dataset& dataset, const ClassifierFactory& factory) {
  // Reject incompatible overrides before spending any queries.
  std::vector<AttackConfig> configs;
  for (const auto& o : sweep) {
    AttackConfig c = o.apply(base.config);
    c.validate();
    (void)c.subspace_for(dataset.shape);
    configs.push_back(c);
  }
  std::vector<CampaignReport> out;
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    Campaign c = base;
    c.config = configs[i];
    c.output_path.clear();
    if (!base.trace_dir.empty()) c.trace_dir = base.trace_dir / ("sweep_" + std::to_string(i));
    CampaignReport r = run_campaign(c, dataset, factory);
    r.config["override"] = sweep[i].to_json();
    out.push_back(std::move(r));
  }
  if (!base.output_path.empty()) {
    json arr = json::array();
    for (const auto& r : out) arr.push_back(to_json(r));
    std::ofstream os(base.output_path, std::ios::trunc);
    if (!os) throw FormatError("cannot write report " + base.output_path.string());
    os << arr.dump(2) << '\n';
  }
  return out;
}

std::vector<CampaignReport> run_ablation(const Campaign& base, const std::vector<ConfigOverride>& sweep) {
  if (sweep.empty()) return {};
  const ClassifierFactory factory = make_classifier_factory(base.oracle_spec);
  const Shape shape = factory()->input_shape();
  const Dataset ds = load_dataset(base.dataset_path, shape);
  return run_ablation(base, sweep, ds, factory);
}

}  // namespace sbo
