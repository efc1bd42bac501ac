// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include "instances.hpp"
#include "sbo/attack.hpp"
#include "sbo/error.hpp"
#include "sbo/harness.hpp"
#include "sbo/remote.hpp"
#include "test_util.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <thread>
#include <sstream>
#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

using namespace sbo;
using sbo::test::offset_ball;
using sbo::test::uniform_matrix;
using sbo::test::uniform_vector;
using Clock = std::chrono::steady_clock;
using cd = std::complex<double>;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

ComplexMatrix naive_dft(const ComplexMatrix& x, int dir) {
  const auto d = x.rows();
  ComplexMatrix out(d, d);
  for (Eigen::Index u = 0; u < d; ++u)
    for (Eigen::Index v = 0; v < d; ++v) {
      cd acc = 0.0;
      for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
          acc += x(i, j) * std::polar(1.0, dir * 2.0 * std::numbers::pi * double(u * i + v * j) / double(d));
      out(u, v) = acc / double(d);
    }
  return out;
}

// 1. transforms
Outcome transforms() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  double worst = 0.0, worst_rt = 0.0;
  for (int d = 2; d <= 16; ++d)
    for (int t = 0; t < 50; ++t) {
      const ComplexMatrix x = uniform_matrix(rng, d, d).cast<cd>() + cd(0, 1) * uniform_matrix(rng, d, d).cast<cd>();
      worst = std::max(worst, (dft2(x) - naive_dft(x, -1)).cwiseAbs().maxCoeff());
      worst = std::max(worst, (idft2(x) - naive_dft(x, +1)).cwiseAbs().maxCoeff());
    }
  for (int d = 2; d <= 64; ++d) {
    const ComplexMatrix x = uniform_matrix(rng, d, d).cast<cd>();
    worst_rt = std::max(worst_rt, (idft2(dft2(x)) - x).cwiseAbs().maxCoeff());
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-10 && worst_rt < 1e-9 && secs < 30.0,
          "naive err " + fmt(worst) + ", round trip err " + fmt(worst_rt) + ", " + fmt(secs) + " s"};
}

// 2. isometries
Outcome isometries() {
  std::mt19937_64 rng(2);
  double dft_err = 0.0, embed_err = 0.0;
  bool nni_exact = true;
  const BasisMode modes[] = {BasisMode::FFT_Full, BasisMode::FFT_Cos, BasisMode::FFT_Sin};
  for (int t = 0; t < 200; ++t) {
    const int d = std::uniform_int_distribution<int>(2, 32)(rng);
    const Matrix x = uniform_matrix(rng, d, d);
    dft_err = std::max(dft_err, std::abs(dft2(x).norm() - x.norm()) / x.norm());

    const int k = std::uniform_int_distribution<int>(1, d / 2)(rng);
    const int c = std::uniform_int_distribution<int>(1, 3)(rng);
    const SubspaceSpec fs{modes[t % 3], k, c, d};
    const Vector coeffs = uniform_vector(rng, fs.coeff_count());
    embed_err = std::max(embed_err, std::abs(fft_embed(coeffs, fs).delta.data.norm() - coeffs.norm()) / coeffs.norm());

    const SubspaceSpec ns{BasisMode::NNI, std::uniform_int_distribution<int>(1, d)(rng), c, d};
    const Vector nc = uniform_vector(rng, ns.coeff_count());
    nni_exact = nni_exact && nni_upsample(nc, ns).delta.data.cwiseAbs().maxCoeff() == nc.cwiseAbs().maxCoeff();
  }
  return {dft_err <= 1e-9 && embed_err <= 1e-9 && nni_exact,
          "dft rel err " + fmt(dft_err) + ", embed rel err " + fmt(embed_err) +
              ", nni linf exact " + (nni_exact ? "yes" : "no")};
}

// 3. GP numerics
Outcome gp_numerics() {
  std::mt19937_64 rng(3);
  double post_err = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int n = std::uniform_int_distribution<int>(1, 20)(rng);
    const int dim = std::uniform_int_distribution<int>(1, 6)(rng);
    const Matrix x = uniform_matrix(rng, n, dim);
    const Vector v = uniform_vector(rng, n);
    const KernelHyper h{std::exp(uniform_vector(rng, 1)[0]), uniform_vector(rng, dim, 0.3, 2.0), 1e-6};
    const double mu = uniform_vector(rng, 1)[0];
    const GPState gp = gp_fit(x, v, h, mu);
    Matrix k = kernel_matrix(x, h);
    k.diagonal().array() += gp.hyper().noise_variance;
    const auto lu = k.fullPivLu();
    for (int q = 0; q < 5; ++q) {
      const Vector p = uniform_vector(rng, dim);
      Vector ks(n);
      for (int i = 0; i < n; ++i) ks[i] = matern52(x.row(i).transpose(), p, h);
      const double m = mu + ks.dot(lu.solve((v.array() - mu).matrix()));
      const double s2 = std::max(0.0, h.signal_variance - ks.dot(lu.solve(ks)));
      const Posterior got = gp_posterior(gp, p);
      post_err = std::max({post_err, std::abs(got.mean - m), std::abs(got.variance - s2)});
    }
  }
  double grad_err = 0.0;
  const double step = 1e-5;
  for (int t = 0; t < 50; ++t) {
    const int dim = std::uniform_int_distribution<int>(1, 4)(rng);
    const Matrix x = uniform_matrix(rng, 8, dim);
    const Vector v = uniform_vector(rng, 8);
    const KernelHyper h{std::exp(uniform_vector(rng, 1)[0]), uniform_vector(rng, dim, 0.3, 1.5),
                        std::exp(uniform_vector(rng, 1, -6, -2)[0])};
    const double mu = uniform_vector(rng, 1)[0];
    const LogLikelihood ll = log_marginal_likelihood(gp_fit(x, v, h, mu));
    for (Eigen::Index j = 0; j < ll.grad.size(); ++j) {
      auto at = [&](double s) {
        KernelHyper k = h;
        double m = mu;
        if (j == 0) k.signal_variance *= std::exp(s);
        else if (j <= dim) k.lengthscales[j - 1] *= std::exp(s);
        else if (j == dim + 1) k.noise_variance *= std::exp(s);
        else m += s;
        return log_marginal_likelihood(gp_fit(x, v, k, m)).value;
      };
      const double fd = (at(step) - at(-step)) / (2 * step);
      grad_err = std::max(grad_err, std::abs(fd - ll.grad[j]) / std::max(1.0, std::abs(fd)));
    }
  }
  return {post_err < 1e-8 && grad_err < 1e-4,
          "posterior err " + fmt(post_err) + ", lml grad rel err " + fmt(grad_err)};
}

// 4. EI
Outcome ei() {
  std::mt19937_64 rng(4);
  double mc_err = 0.0;
  const double means[] = {-1.0, -0.5, 0.0, 0.5, 1.0};
  const double stds[] = {0.1, 0.5, 1.0, 1.5, 2.0};
  const double bests[] = {-0.5, 0.0, 0.5};
  std::normal_distribution<double> nd;
  for (double m : means)
    for (double s : stds)
      for (double b : bests) {
        double acc = 0.0;
        const int n = 1000000;
        for (int i = 0; i < n; ++i) acc += std::max(m + s * nd(rng) - b, 0.0);
        mc_err = std::max(mc_err, std::abs(acc / n - expected_improvement(m, s, b)));
      }
  double grad_err = 0.0;
  int checked = 0;
  const double h = 1e-6;
  for (int t = 0; t < 100; ++t) {
    const GPState gp = gp_fit(uniform_matrix(rng, 6, 3), uniform_vector(rng, 6), {1.0, Vector::Constant(3, 0.6), 1e-6}, 0.0);
    AcquisitionSpec spec;
    spec.best_value = gp.values().maxCoeff();
    const Vector x = uniform_vector(rng, 3);
    if (std::sqrt(gp_posterior(gp, x).variance) < 1e-6) continue;
    const AcquisitionValue av = acquisition_value_and_grad(gp, spec, x);
    for (int j = 0; j < 3; ++j) {
      Vector a = x, b = x;
      a[j] += h;
      b[j] -= h;
      const double fd = (acquisition_value_and_grad(gp, spec, a).value - acquisition_value_and_grad(gp, spec, b).value) / (2 * h);
      grad_err = std::max(grad_err, std::abs(fd - av.grad[j]) / std::max(1e-2, std::abs(fd)));
    }
    ++checked;
  }
  return {mc_err < 3e-3 && grad_err < 1e-4,
          "MC abs err " + fmt(mc_err) + " on 75 grid points, grad rel err " + fmt(grad_err) + " on " +
              std::to_string(checked) + " points"};
}

// 5. projections
Outcome projections() {
  std::mt19937_64 rng(5);
  bool ok = true;
  double oracle_err = 0.0;
  for (int t = 0; t < 500; ++t) {
    const int n = std::uniform_int_distribution<int>(1, 64)(rng);
    const double eps = std::uniform_real_distribution<double>(0.01, 2.0)(rng);
    const Vector a = uniform_vector(rng, n, -3, 3), b = uniform_vector(rng, n, -3, 3);
    for (NormKind k : {NormKind::L2, NormKind::Linf}) {
      const Vector pa = project(a, eps, k), pb = project(b, eps, k);
      ok = ok && project(pa, eps, k) == pa;
      ok = ok && (pa - pb).norm() <= (a - b).norm() + 1e-12;
      ok = ok && norm_of(pa, k) <= eps + 1e-12;
    }
    // argmin ||y - a||^2 s.t. ||y||^2 <= eps^2: y = a / (1 + lambda), lambda by bisection.
    Vector want = a;
    if (a.norm() > eps) {
      double lo = 0.0, hi = 1e8;
      for (int it = 0; it < 300; ++it) {
        const double mid = 0.5 * (lo + hi);
        (a.norm() / (1 + mid) > eps ? lo : hi) = mid;
      }
      want = a / (1 + hi);
    }
    oracle_err = std::max(oracle_err, (project_l2(a, eps) - want).cwiseAbs().maxCoeff());
  }
  return {ok && oracle_err < 1e-9, std::string("idempotent/non-expansive/feasible ") + (ok ? "yes" : "no") +
                                       ", l2 oracle err " + fmt(oracle_err)};
}

AttackConfig ball_config(double margin, std::uint64_t seed) {
  AttackConfig c = AttackConfig::defaults_for(NormKind::Linf);
  c.eps = 2.0 * margin;
  c.basis_mode = BasisMode::NNI;
  c.low_dim_side = 4;
  c.budget = 200;
  c.n_init = 5;
  c.seed = seed;
  return c;
}

// 6. end-to-end
Outcome end_to_end() {
  const auto t0 = Clock::now();
  int ok = 0;
  double q = 0.0;
  for (int i = 0; i < 20; ++i) {
    auto inst = offset_ball(6000 + i);
    if (inst.model->predict(inst.x0) != 0) return {false, "instance " + std::to_string(i) + " starts misclassified"};
    const AttackResult r = bayes_attack(inst.x0, 0, ball_config(inst.margin, i), *inst.model);
    ok += r.success;
    if (r.success) q += r.queries_used;
  }
  const double secs = seconds_since(t0);
  return {ok >= 18 && secs < 300.0, std::to_string(ok) + "/20 succeeded, mean queries on success " +
                                         fmt(ok ? q / ok : 0.0) + ", " + fmt(secs) + " s"};
}

// 7. Bayes vs random on paired instances
Outcome query_ordering() {
  std::vector<double> diff;
  double sb = 0.0, sr = 0.0;
  int succ_b = 0, succ_r = 0;
  for (int i = 0; i < 30; ++i) {
    auto inst = offset_ball(7000 + i, 3.0);
    const AttackConfig c = ball_config(inst.margin, 100 + i);
    const AttackResult b = bayes_attack(inst.x0, 0, c, *inst.model);
    const AttackResult r = random_search_attack(inst.x0, 0, c, *inst.model);
    // Failures count the full budget.
    sb += b.queries_used;
    sr += r.queries_used;
    succ_b += b.success;
    succ_r += r.success;
    diff.push_back(double(b.queries_used) - double(r.queries_used));
  }
  const double n = double(diff.size());
  const double mean_b = sb / n, mean_r = sr / n;
  const double md = (sb - sr) / n;
  double var = 0.0;
  for (double d : diff) var += (d - md) * (d - md);
  var /= (n - 1);
  const double t = var > 0 ? md / std::sqrt(var / n) : 0.0;
  return {mean_b <= mean_r, "bayes mean " + fmt(mean_b) + " (" + std::to_string(succ_b) + "/30), random mean " +
                                fmt(mean_r) + " (" + std::to_string(succ_r) + "/30), paired t " + fmt(t)};
}

class Counting final : public Classifier {
 public:
  explicit Counting(Classifier& c) : inner_(c) {}
  [[nodiscard]] Shape input_shape() const override { return inner_.input_shape(); }
  [[nodiscard]] int num_classes() const override { return inner_.num_classes(); }
  [[nodiscard]] bool supports_soft() const override { return inner_.supports_soft(); }
  Label predict(const ImageTensor& x) override {
    ++calls;
    return inner_.predict(x);
  }
  Vector logits(const ImageTensor& x) override {
    ++calls;
    return inner_.logits(x);
  }
  std::int64_t calls = 0;

 private:
  Classifier& inner_;
};

// 8. accounting
Outcome accounting() {
  std::mt19937_64 rng(8);
  int bad = 0, successes = 0;
  const BasisMode modes[] = {BasisMode::NNI, BasisMode::FFT_Full, BasisMode::FFT_Cos, BasisMode::FFT_Sin};
  for (int t = 0; t < 100; ++t) {
    const Shape s{std::uniform_int_distribution<int>(1, 3)(rng), 8, 8};
    const NormKind norm = t % 2 ? NormKind::L2 : NormKind::Linf;
    AttackConfig c = AttackConfig::defaults_for(norm);
    c.basis_mode = modes[std::uniform_int_distribution<int>(0, 3)(rng)];
    c.low_dim_side = std::uniform_int_distribution<int>(1, c.basis_mode == BasisMode::NNI ? 8 : 4)(rng);
    c.eps = norm == NormKind::L2 ? 1.0 : 0.08;
    c.budget = std::uniform_int_distribution<int>(8, 40)(rng);
    c.n_init = std::uniform_int_distribution<int>(1, 6)(rng);
    c.acquisition = static_cast<AcquisitionKind>(t % 4);
    c.seed = rng();
    LinearClassifier lin(s, uniform_matrix(rng, 2, s.size()), Vector::Zero(2));
    const ImageTensor x0{s, uniform_vector(rng, s.size(), 0, 1)};
    const Label y0 = lin.predict(x0);
    Counting counted(lin);
    const AttackResult r = bayes_attack(x0, y0, c, counted);
    successes += r.success;
    const std::int64_t failures = r.queries_used - (r.success ? 1 : 0);
    const bool fine = r.queries_used <= c.budget && counted.calls == r.queries_used &&
                      r.gp_rows == failures && !r.trace.empty() &&
                      r.success == (r.trace.back().value == 0.0) &&
                      (r.success || r.queries_used == c.budget) && !r.error;
    bad += !fine;
  }
  return {bad == 0, std::to_string(100 - bad) + "/100 configs consistent (" + std::to_string(successes) + " successes)"};
}

// 9. determinism
Outcome determinism() {
  std::mt19937_64 rng(9);
  const Shape s{3, 8, 8};
  const Matrix w = uniform_matrix(rng, 4, s.size(), -0.1, 0.1);
  LinearClassifier lin(s, w, Vector::Zero(4));
  Dataset data{s, 4, {}};
  for (int i = 0; i < 12; ++i) {
    ImageTensor x{s, uniform_vector(rng, s.size(), 0, 1)};
    data.items.push_back({x, lin.predict(x)});
  }
  ClassifierFactory f = [&] { return std::make_unique<LinearClassifier>(s, w, Vector::Zero(4)); };
  Campaign c;
  c.config = AttackConfig::defaults_for(NormKind::Linf);
  c.config.eps = 0.05;
  c.config.budget = 30;
  c.config.low_dim_side = 4;
  c.config.seed = 99;
  c.random_targets = true;
  const std::string a = images_to_json(run_campaign(c, data, f).images).dump();
  const std::string b = images_to_json(run_campaign(c, data, f).images).dump();
  c.workers = 4;
  const std::string p = images_to_json(run_campaign(c, data, f).images).dump();
  c.method = AttackMethod::RandomSearch;
  const std::string r1 = images_to_json(run_campaign(c, data, f).images).dump();
  const std::string r2 = images_to_json(run_campaign(c, data, f).images).dump();
  return {a == b && a == p && r1 == r2, std::string("repeat ") + (a == b ? "identical" : "differs") +
                                            ", 4 workers " + (a == p ? "identical" : "differs") +
                                            ", random search " + (r1 == r2 ? "identical" : "differs") + " (" +
                                            std::to_string(a.size()) + " bytes)"};
}

// Runs `sbo serve-oracle` as a child process and reads its port.
struct ServerProcess {
  pid_t pid = -1;
  std::uint16_t port = 0;

  ServerProcess(const std::string& cli, const std::string& model) {
    int fds[2];
    if (::pipe(fds) != 0) throw std::runtime_error("pipe failed");
    pid = ::fork();
    if (pid == 0) {
      ::dup2(fds[1], STDOUT_FILENO);
      ::close(fds[0]);
      ::close(fds[1]);
      ::execl(cli.c_str(), cli.c_str(), "serve-oracle", "--model", model.c_str(), "--port", "0",
              static_cast<char*>(nullptr));
      _exit(127);
    }
    ::close(fds[1]);
    std::string line;
    char ch;
    while (::read(fds[0], &ch, 1) == 1 && ch != '\n') line.push_back(ch);
    ::close(fds[0]);
    const auto colon = line.rfind(':');
    if (line.rfind("listening on", 0) != 0 || colon == std::string::npos)
      throw std::runtime_error("server did not start: '" + line + "'");
    port = static_cast<std::uint16_t>(std::stoi(line.substr(colon + 1)));
  }
  ~ServerProcess() {
    if (pid > 0) {
      ::kill(pid, SIGTERM);
      int status = 0;
      ::waitpid(pid, &status, 0);
    }
  }
};

// 10. wire protocol
Outcome wire_protocol(const std::string& cli) {
  namespace fs = std::filesystem;
  std::mt19937_64 rng(10);
  const Shape s{3, 8, 8};
  const fs::path model_path = fs::temp_directory_path() / "sbo_acceptance_model.sbo";
  {
    MlpClassifier mlp(s, uniform_matrix(rng, 16, s.size()), uniform_vector(rng, 16), uniform_matrix(rng, 5, 16),
                      uniform_vector(rng, 5));
    save_model(model_path, mlp);
  }
  // Local reference reads the same float32 weights as the server.
  const auto local = load_model(model_path);

  std::unique_ptr<ServerProcess> proc;
  std::unique_ptr<OracleServer> in_process;
  std::uint16_t port = 0;
  std::string where;
  if (!cli.empty()) {
    proc = std::make_unique<ServerProcess>(cli, model_path.string());
    port = proc->port;
    where = "serve-oracle process";
  } else {
    in_process = std::make_unique<OracleServer>(load_model(model_path));
    in_process->start();
    port = in_process->port();
    where = "in-process server";
  }

  RemoteClassifier remote({"127.0.0.1", port});
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const ImageTensor x{s, uniform_vector(rng, s.size(), 0, 1)};
    mismatches += remote.predict(x) != local->predict(x);
  }

  // Malformed frames straight to the server: each gets an error reply and the
  // connection keeps serving.
  using namespace std::chrono_literals;
  LineSocket raw = LineSocket::connect("127.0.0.1", port, 2000ms);
  raw.send_line(R"({"hello":1})");
  raw.read_line(2000ms);
  int error_replies = 0;
  const char* junk[] = {"{{{", "[]", R"({"id":1,"mode":"hard"})", R"({"id":2,"mode":"hard","image":[0.5]})",
                        R"({"mode":"hard","image":[]})", R"({"id":3,"mode":"maybe","image":[]})"};
  for (const char* j : junk) {
    raw.send_line(j);
    error_replies += nlohmann::json::parse(raw.read_line(2000ms)).contains("error");
  }
  const ImageTensor probe{s, Vector::Constant(s.size(), 0.3)};
  nlohmann::json good{{"id", 7}, {"mode", "hard"}, {"image", std::vector<double>(probe.data.begin(), probe.data.end())}};
  raw.send_line(good.dump());
  const auto ok_reply = nlohmann::json::parse(raw.read_line(2000ms));
  const bool still_serving = ok_reply.value("label", -1) == local->predict(probe);

  // Malformed replies seen by the client: ProtocolError, no budget spent.
  const int lfd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  socklen_t alen = sizeof addr;
  if (::bind(lfd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(lfd, 1) != 0 ||
      ::getsockname(lfd, reinterpret_cast<sockaddr*>(&addr), &alen) != 0)
    throw std::runtime_error("cannot open corrupting server");
  const char* bad_replies[] = {"garbage{", R"({"id":999,"label":0})", R"({"id":3})", R"({"id":4,"label":"x"})",
                               R"({"id":5,"error":"nope"})"};
  std::thread corrupt([&] {
    const int c = ::accept(lfd, nullptr, nullptr);
    if (c < 0) return;
    LineSocket conn(c);
    try {
      conn.read_line(2000ms);
      conn.send_line(nlohmann::json{{"modes", {"hard"}}, {"classes", 5}, {"shape", {3, 8, 8}}}.dump());
      for (const char* r : bad_replies) {
        conn.read_line(2000ms);
        conn.send_line(r);
      }
    } catch (const std::exception&) {
    }
  });
  int protocol_errors = 0;
  std::int64_t spent = 0;
  {
    RemoteClassifier client({"127.0.0.1", ntohs(addr.sin_port)});
    Oracle metered(client, 100);
    for (std::size_t i = 0; i < std::size(bad_replies); ++i) {
      try {
        metered.query_hard(probe);
      } catch (const ProtocolError&) {
        ++protocol_errors;
      }
    }
    spent = metered.ledger().used();
  }
  corrupt.join();
  ::close(lfd);
  const bool pass = mismatches == 0 && error_replies == int(std::size(junk)) && still_serving &&
                    protocol_errors == int(std::size(bad_replies)) && spent == 0;
  fs::remove(model_path);
  return {pass, where + ": " + std::to_string(mismatches) + " mismatches / 1000, " + std::to_string(error_replies) +
                    "/" + std::to_string(std::size(junk)) + " malformed frames answered with errors, connection " +
                    (still_serving ? "still serving" : "broken") + ", " +
                    std::to_string(protocol_errors) + "/" + std::to_string(std::size(bad_replies)) +
                    " corrupt replies raised protocol errors, budget spent " + std::to_string(spent)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string cli;
  app.add_option("--cli", cli, "path to the sbo executable for the wire-protocol check");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks = {
      {"1 transform correctness", transforms},
      {"2 isometry suite", isometries},
      {"3 GP numerics", gp_numerics},
      {"4 EI correctness", ei},
      {"5 projection suite", projections},
      {"6 end-to-end attack", end_to_end},
      {"7 query-efficiency ordering", query_ordering},
      {"8 algorithm accounting", accounting},
      {"9 determinism", determinism},
      {"10 wire protocol", [&] { return wire_protocol(cli); }},
  };
  int failed = 0;
  for (const auto& [name, run] : checks) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
