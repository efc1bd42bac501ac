// Command-line front end: single attacks, campaigns, ablation sweeps, the
// oracle server and self-checks.

#include "sbo/attack.hpp"
#include "sbo/error.hpp"
#include "sbo/harness.hpp"
#include "sbo/remote.hpp"
#include "sbo/selfcheck.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <random>
#include <thread>

namespace {

using nlohmann::json;

struct AttackFlags {
  std::string norm = "Linf";
  double eps = 0.05;
  std::int64_t budget = 1000;
  int rd_side = 4;
  std::string basis;
  std::string init;
  bool targeted = false;
  int target_label = -1;
  int n_init = 5;
  std::string acquisition = "EI";
  std::string feedback = "hard";
  std::uint64_t seed = 0;
  std::string oracle;
  std::string dataset;
  std::string out;
  std::string trace_dir;
  int workers = 1;
  std::string method = "bayes";
  int refit_every = 5;
  int hyper_restarts = 2;
  int acq_restarts = 10;

  void add(CLI::App* app) {
    app->add_option("--norm", norm, "Threat model: Linf or L2")->capture_default_str();
    app->add_option("--eps", eps, "Perturbation radius")->capture_default_str();
    app->add_option("--budget", budget, "Query budget per image")->capture_default_str();
    app->add_option("--rd-side", rd_side, "Side of the low-dimensional square")->capture_default_str();
    app->add_option("--basis", basis, "FFT_Full, FFT_Cos, FFT_Sin or NNI (default follows --norm)");
    app->add_option("--init", init, "StdNormal or Uniform (default follows --norm)");
    app->add_flag("--targeted", targeted, "Targeted attack");
    app->add_option("--target-label", target_label, "Fixed target class (random per image if omitted)");
    app->add_option("--n-init", n_init, "Initial random queries")->capture_default_str();
    app->add_option("--acquisition", acquisition, "EI, PI, UCB or PosteriorMean")->capture_default_str();
    app->add_option("--feedback", feedback, "hard or soft")->capture_default_str();
    app->add_option("--seed", seed, "Base seed")->capture_default_str();
    app->add_option("--oracle", oracle, "Weight file path or tcp:host:port")->required();
    app->add_option("--dataset", dataset, "SBD1 dataset file")->required();
    app->add_option("--out", out, "Output JSON path (stdout if omitted)");
    app->add_option("--trace-dir", trace_dir, "Directory for per-image trace CSVs");
    app->add_option("--workers", workers, "Parallel workers")->capture_default_str();
    app->add_option("--method", method, "bayes or random")->capture_default_str();
    app->add_option("--refit-every", refit_every, "Hyperparameter refit cadence")->capture_default_str();
    app->add_option("--hyper-restarts", hyper_restarts, "Hyperparameter fit restarts")->capture_default_str();
    app->add_option("--acq-restarts", acq_restarts, "Acquisition maximization restarts")->capture_default_str();
  }

  [[nodiscard]] sbo::AttackConfig config() const {
    sbo::AttackConfig c = sbo::AttackConfig::defaults_for(sbo::parse_norm(norm));
    c.eps = eps;
    c.budget = budget;
    c.low_dim_side = rd_side;
    if (!basis.empty()) c.basis_mode = sbo::parse_basis(basis);
    if (!init.empty()) c.init_dist = sbo::parse_init(init);
    c.n_init = n_init;
    c.acquisition = sbo::parse_acquisition(acquisition);
    if (feedback == "soft") c.objective.feedback = sbo::Feedback::SoftLabel;
    else if (feedback != "hard") throw sbo::InvalidArgument("--feedback must be hard or soft");
    if (targeted && target_label >= 0) c.objective.target = target_label;
    c.seed = seed;
    c.gp.refit_every = refit_every;
    c.gp.hyper_restarts = hyper_restarts;
    c.gp.acquisition.restarts = acq_restarts;
    return c;
  }

  [[nodiscard]] sbo::Campaign campaign() const {
    sbo::Campaign c;
    c.dataset_path = dataset;
    c.oracle_spec = oracle;
    c.config = config();
    if (method == "random") c.method = sbo::AttackMethod::RandomSearch;
    else if (method != "bayes") throw sbo::InvalidArgument("--method must be bayes or random");
    c.output_path = out;
    c.trace_dir = trace_dir;
    c.workers = workers;
    c.random_targets = targeted && target_label < 0;
    return c;
  }
};

void emit(const json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream os(out, std::ios::trunc);
  if (!os) throw sbo::FormatError("cannot write " + out);
  os << j.dump(2) << '\n';
}

json summary_line(const sbo::CampaignReport& r) {
  return {{"attacked", r.attacked},
          {"successes", r.successes},
          {"success_rate", r.success_rate},
          {"avg_queries_on_success", r.avg_queries_on_success},
          {"median_queries_on_success", r.median_queries_on_success},
          {"degenerate", r.degenerate}};
}

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

int synth(const std::string& model_path, const std::string& dataset_path, int channels, int side,
          int count, double margin, std::uint64_t seed) {
  // Ball oracle with an l_inf margin of `margin` around each dataset image's
  // shared center; images are the center plus tiny noise.
  const sbo::Shape shape{channels, side, side};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.3, 0.7);
  sbo::Vector center(shape.size());
  for (auto& v : center) v = u(rng);
  const double radius = margin * std::sqrt(static_cast<double>(shape.size()));
  sbo::BallClassifier model(shape, center, radius);
  sbo::save_model(model_path, model);
  sbo::Dataset ds;
  ds.shape = shape;
  ds.num_classes = 2;
  std::uniform_real_distribution<double> noise(-0.25 * margin, 0.25 * margin);
  for (int n = 0; n < count; ++n) {
    sbo::Vector img = center;
    for (auto& v : img) v = std::clamp(v + noise(rng), 0.0, 1.0);
    ds.items.push_back({sbo::ImageTensor(shape, img), 0});
  }
  sbo::save_dataset(dataset_path, ds);
  std::cout << "wrote " << model_path << " and " << dataset_path << " (radius " << radius << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query-efficient hard-label black-box attacks by Bayesian optimization"};
  app.require_subcommand(1);

  AttackFlags single;
  std::int64_t index = 0;
  auto* attack = app.add_subcommand("attack", "Attack a single dataset image");
  single.add(attack);
  attack->add_option("--index", index, "Dataset image index")->capture_default_str();

  AttackFlags camp;
  std::int64_t count = 0;
  auto* campaign = app.add_subcommand("campaign", "Attack a batch of images and report metrics");
  camp.add(campaign);
  campaign->add_option("--count", count, "Images to attack (0 = all)")->capture_default_str();

  AttackFlags abl;
  std::int64_t abl_count = 0;
  std::vector<std::string> sweeps;
  auto* ablate = app.add_subcommand("ablate", "Run one campaign per override on shared seeds");
  abl.add(ablate);
  ablate->add_option("--count", abl_count, "Images to attack (0 = all)")->capture_default_str();
  ablate->add_option("--sweep", sweeps, "Override such as basis=FFT_Cos,rd=8 (repeatable)");

  std::string model_path;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  auto* serve = app.add_subcommand("serve-oracle", "Host a built-in model over the wire protocol");
  serve->add_option("--model", model_path, "SBO1 weight file")->required();
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "TCP port (0 picks a free port)")->capture_default_str();

  std::uint64_t verify_seed = 0;
  int verify_instances = 20;
  auto* verify = app.add_subcommand("verify", "Run property self-checks");
  verify->add_option("--seed", verify_seed, "Seed")->capture_default_str();
  verify->add_option("--instances", verify_instances, "Random instances per check")->capture_default_str();

  std::string synth_model, synth_dataset;
  int synth_channels = 3, synth_side = 16, synth_count = 20;
  double synth_margin = 0.05;
  std::uint64_t synth_seed = 0;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic ball model and dataset");
  synth_cmd->add_option("--model", synth_model, "Output weight file")->required();
  synth_cmd->add_option("--dataset", synth_dataset, "Output dataset file")->required();
  synth_cmd->add_option("--channels", synth_channels)->capture_default_str();
  synth_cmd->add_option("--side", synth_side)->capture_default_str();
  synth_cmd->add_option("--count", synth_count)->capture_default_str();
  synth_cmd->add_option("--margin", synth_margin, "l_inf decision margin")->capture_default_str();
  synth_cmd->add_option("--seed", synth_seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*attack) {
      const auto factory = sbo::make_classifier_factory(single.oracle);
      auto model = factory();
      const sbo::Dataset ds = sbo::load_dataset(single.dataset, model->input_shape());
      if (index < 0 || index >= static_cast<std::int64_t>(ds.items.size())) {
        throw sbo::InvalidArgument("--index out of range");
      }
      const auto& item = ds.items[static_cast<std::size_t>(index)];
      sbo::AttackConfig cfg = single.config();
      if (single.targeted && single.target_label < 0) {
        cfg.objective.target = (item.label + 1) % model->num_classes();
      }
      const sbo::AttackResult r = single.method == "random"
                                      ? sbo::random_search_attack(item.image, item.label, cfg, *model)
                                      : sbo::bayes_attack(item.image, item.label, cfg, *model);
      json j;
      j["success"] = r.success;
      j["queries_used"] = r.queries_used;
      j["adversarial_label"] = r.adversarial_label ? json(*r.adversarial_label) : json(nullptr);
      j["gp_rows"] = r.gp_rows;
      j["final_coeffs"] = std::vector<double>(r.final_coeffs.data(), r.final_coeffs.data() + r.final_coeffs.size());
      j["perturbation_linf"] = r.final_delta.delta.data.size() ? r.final_delta.delta.data.lpNorm<Eigen::Infinity>() : 0.0;
      j["perturbation_l2"] = r.final_delta.delta.data.norm();
      json trace = json::array();
      for (const auto& t : r.trace) trace.push_back({t.query_index, t.value});
      j["trace"] = trace;
      if (r.error) j["error"] = *r.error;
      j["config"] = sbo::config_to_json(cfg);
      emit(j, single.out);
      if (!single.trace_dir.empty()) {
        std::filesystem::create_directories(single.trace_dir);
        sbo::write_trace_csv(std::filesystem::path(single.trace_dir) /
                                 ("image_" + std::to_string(index) + ".csv"),
                             r.trace);
      }
      return r.error ? 2 : 0;
    }
    if (*campaign) {
      sbo::Campaign c = camp.campaign();
      c.image_count = count;
      const sbo::CampaignReport r = sbo::run_campaign(c);
      if (c.output_path.empty()) std::cout << sbo::to_json(r).dump(2) << '\n';
      else std::cerr << summary_line(r).dump() << '\n';
      return 0;
    }
    if (*ablate) {
      sbo::Campaign c = abl.campaign();
      c.image_count = abl_count;
      std::vector<sbo::ConfigOverride> overrides;
      for (const auto& s : sweeps) overrides.push_back(sbo::ConfigOverride::parse(s));
      const auto reports = sbo::run_ablation(c, overrides);
      if (c.output_path.empty()) {
        json arr = json::array();
        for (const auto& r : reports) arr.push_back(sbo::to_json(r));
        std::cout << arr.dump(2) << '\n';
      } else {
        for (std::size_t i = 0; i < reports.size(); ++i) {
          std::cerr << overrides[i].to_json().dump() << ' ' << summary_line(reports[i]).dump() << '\n';
        }
      }
      return 0;
    }
    if (*serve) {
      sbo::OracleServer server(sbo::load_model(model_path), host, port);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.start();
      std::cout << "listening on " << host << ':' << server.port() << std::endl;
      while (g_stop == 0) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      return 0;
    }
    if (*verify) {
      bool ok = true;
      for (const auto& r : sbo::run_self_checks(verify_seed, verify_instances)) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.detail << ")\n";
        ok = ok && r.passed;
      }
      return ok ? 0 : 1;
    }
    if (*synth_cmd) {
      return synth(synth_model, synth_dataset, synth_channels, synth_side, synth_count, synth_margin,
                   synth_seed);
    }
  } catch (const sbo::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
