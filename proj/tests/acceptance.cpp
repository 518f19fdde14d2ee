// Acceptance gate: ten end-to-end checks, one [PASS]/[FAIL] line each.
// The exit code is the number of failed checks.  Heavy checks print
// their elapsed time; budgets are part of the pass condition.

#include <sys/wait.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oracle/conjugate.hpp"
#include "oracle/dense_kernels.hpp"
#include "oracle/fd.hpp"
#include "surfreg/dataprep.hpp"
#include "surfreg/evaluation.hpp"
#include "surfreg/kernels.hpp"
#include "surfreg/posterior.hpp"
#include "surfreg/rng.hpp"
#include "surfreg/sampler.hpp"
#include "surfreg/simulation.hpp"

namespace fs = std::filesystem;
using namespace surfreg;

namespace {

constexpr double ln2pi = 1.8378770664093453;

int failures = 0;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(int idx, const std::string& name, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("[%s] %2d. %s%s%s\n", pass ? "PASS" : "FAIL", idx, name.c_str(),
              detail.empty() ? "" : ": ", detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

// ---- shared random test instance (dataset + prior + interior state) ----

struct instance {
  dataset data;
  prior_spec prior;
  model_state state;
};

instance make_instance(index_t n, index_t d, index_t p, index_t q_s,
                       std::vector<index_t> add_counts, std::uint64_t seed,
                       bool gram_all = false) {
  rng gen(seed);
  mat X(n, d), Y(n, p);
  for (index_t i = 0; i < n; ++i) {
    for (index_t j = 0; j < d; ++j) X(i, j) = gen.runif(-2.0, 2.0);
    for (index_t j = 0; j < p; ++j)
      Y(i, j) = std::sin(X(i, 0)) + 0.4 * X(i, d > 1 ? 1 : 0) * X(i, 0) + 0.7 * gen.rnorm();
  }
  instance inst{make_dataset(Y, X), {}, {}};
  knot_counts counts;
  counts.surface = q_s;
  counts.additive = add_counts;
  inst.prior = default_prior(inst.data, counts, seed ^ 0x517cc1b7u);
  if (gram_all) {
    inst.prior.P_a = gram_choice::gram;
    inst.prior.P_s = gram_choice::gram;
  }

  inst.state.knots.surface = inst.prior.surface_knot_mean;
  for (index_t i = 0; i < q_s; ++i)
    for (index_t j = 0; j < d; ++j) inst.state.knots.surface(i, j) += gen.runif(-0.3, 0.3);
  for (std::size_t v = 0; v < add_counts.size(); ++v) {
    vec a = add_counts[v] > 0 ? inst.prior.additive_knot_mean[v] : vec();
    for (index_t k = 0; k < a.size(); ++k) a[k] += gen.runif(-0.3, 0.3);
    inst.state.knots.additive.push_back(a);
  }
  inst.state.log_lambda = inst.prior.loglambda_mean;
  for (index_t i = 0; i < 3; ++i)
    for (index_t j = 0; j < p; ++j) inst.state.log_lambda(i, j) += gen.runif(-0.5, 0.5);
  mat R(p, p);
  for (index_t i = 0; i < p; ++i)
    for (index_t j = 0; j < p; ++j) R(i, j) = 0.15 * gen.rnorm();
  inst.state.Sigma = inst.prior.S0 + R * R.transpose() + 0.05 * mat::Identity(p, p);
  return inst;
}

int component_of(index_t r, index_t q_o, index_t q_a) {
  return r < q_o ? 0 : (r < q_o + q_a ? 1 : 2);
}

// dense coefficient prior moments, built entry-by-entry from the definition
void dense_prior_moments(const instance& inst, const design_matrix& dm, vec& mu, mat& cov) {
  const index_t p = inst.data.p(), q = dm.q();
  const index_t q_arr[3] = {dm.q_o, dm.q_a, dm.q_s};
  const index_t off[3] = {0, dm.q_o, dm.q_o + dm.q_a};
  const gram_choice gc[3] = {inst.prior.P_o, inst.prior.P_a, inst.prior.P_s};
  const mat* means[3] = {&inst.prior.M_o, &inst.prior.M_a, &inst.prior.M_s};

  mat P_inv[3];
  for (int i = 0; i < 3; ++i) {
    if (q_arr[i] == 0) continue;
    mat P = gc[i] == gram_choice::gram
                ? mat(dm.X.middleCols(off[i], q_arr[i]).transpose() *
                      dm.X.middleCols(off[i], q_arr[i]))
                : mat(mat::Identity(q_arr[i], q_arr[i]));
    P_inv[i] = P.inverse();
  }

  mu.resize(p * q);
  cov = mat::Zero(p * q, p * q);
  for (index_t j1 = 0; j1 < p; ++j1)
    for (index_t r1 = 0; r1 < q; ++r1) {
      int i1 = component_of(r1, dm.q_o, dm.q_a);
      mu[j1 * q + r1] = (*means[i1])(r1 - off[i1], j1);
      for (index_t j2 = 0; j2 < p; ++j2)
        for (index_t r2 = 0; r2 < q; ++r2) {
          int i2 = component_of(r2, dm.q_o, dm.q_a);
          if (i1 != i2) continue;
          double lam = std::exp(0.5 * inst.state.log_lambda(i1, j1) +
                                0.5 * inst.state.log_lambda(i1, j2));
          cov(j1 * q + r1, j2 * q + r2) =
              lam * inst.state.Sigma(j1, j2) * P_inv[i1](r1 - off[i1], r2 - off[i1]);
        }
    }
}

double dense_log_multigamma(index_t p, double a) {
  double out = 0.25 * p * (p - 1) * std::log(M_PI);
  for (index_t j = 1; j <= p; ++j) out += std::lgamma(a + 0.5 * (1.0 - j));
  return out;
}

double dense_log_priors(const instance& inst) {
  double out = 0.0;
  const knot_set& k = inst.state.knots;
  if (k.q_s() > 0) {
    const index_t d = k.surface.cols();
    mat prec = inst.prior.surface_knot_cov.inverse();
    double logdet = std::log(inst.prior.surface_knot_cov.determinant());
    for (index_t j = 0; j < k.q_s(); ++j) {
      vec diff = (k.surface.row(j) - inst.prior.surface_knot_mean.row(j)).transpose();
      out += -0.5 * d * ln2pi - 0.5 * logdet - 0.5 * diff.dot(prec * diff);
    }
  }
  for (std::size_t v = 0; v < k.additive.size(); ++v)
    for (index_t j = 0; j < k.additive[v].size(); ++j) {
      double var = inst.prior.additive_knot_var[v];
      double diff = k.additive[v][j] - inst.prior.additive_knot_mean[v][j];
      out += -0.5 * ln2pi - 0.5 * std::log(var) - 0.5 * diff * diff / var;
    }
  const index_t p = inst.data.p();
  for (index_t i = 0; i < 3; ++i)
    for (index_t j = 0; j < p; ++j) {
      double var = inst.prior.loglambda_var(i, j);
      double diff = inst.state.log_lambda(i, j) - inst.prior.loglambda_mean(i, j);
      out += -0.5 * ln2pi - 0.5 * std::log(var) - 0.5 * diff * diff / var;
    }
  const double nu = inst.prior.n0;
  mat psi = inst.prior.n0 * inst.prior.S0;
  mat sig_inv = inst.state.Sigma.inverse();
  out += 0.5 * nu * std::log(psi.determinant()) - 0.5 * nu * p * std::log(2.0) -
         dense_log_multigamma(p, 0.5 * nu) -
         0.5 * (nu + p + 1.0) * std::log(inst.state.Sigma.determinant()) -
         0.5 * (psi * sig_inv).trace();
  return out;
}

mat random_mat(index_t r, index_t c, std::mt19937_64& g) {
  std::normal_distribution<double> d(0.0, 1.0);
  mat m(r, c);
  for (index_t j = 0; j < c; ++j)
    for (index_t i = 0; i < r; ++i) m(i, j) = d(g);
  return m;
}

// ---- CLI helpers for the determinism check ----

struct cli_result {
  int code = -1;
  std::string output;
};

cli_result run_cli(const std::string& args) {
  cli_result res;
  std::string cmd = std::string(SURFREG_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return res;
  char buf[4096];
  while (std::size_t got = std::fread(buf, 1, sizeof buf, pipe)) res.output.append(buf, got);
  int status = pclose(pipe);
  res.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// filename -> bytes, wall-clock-only files skipped
std::map<std::string, std::string> dir_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "timing.json")
      out[e.path().filename().string()] = slurp(e.path());
  return out;
}

std::string quoted(const fs::path& p) { return "\"" + p.string() + "\""; }

bool same_dir(const fs::path& a, const fs::path& b, std::string& why) {
  auto ca = dir_contents(a), cb = dir_contents(b);
  if (ca.size() != cb.size()) {
    why = fmt("%s and %s hold %zu vs %zu files", a.c_str(), b.c_str(), ca.size(), cb.size());
    return false;
  }
  for (const auto& [name, bytes] : ca) {
    auto it = cb.find(name);
    if (it == cb.end() || it->second != bytes) {
      why = name + " differs between " + a.string() + " and " + b.string();
      return false;
    }
  }
  return true;
}

// ---- check 1: analytic gradients vs central finite differences ----

void check_gradients() {
  auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const index_t n = 20 + (i * 7) % 31;
    const index_t p = 1 + i % 2;
    const index_t d = 1 + i % 3;
    const index_t q_s = 1 + i % 4;
    std::vector<index_t> add(d);
    for (index_t v = 0; v < d; ++v) add[v] = (i + v) % 3;
    instance inst = make_instance(n, d, p, q_s, add, 7100 + i, i % 5 == 0);

    vec flat = inst.state.knots.flatten();
    auto f_knots = [&](const vec& th) {
      model_state st = inst.state;
      st.knots = inst.state.knots.with_flat(th);
      return log_marginal(st, inst.data, inst.prior);
    };
    vec fd = oracle::central_fd(f_knots, flat, 1e-5);
    vec exact = grad_knots(inst.state, inst.data, inst.prior);
    worst = std::max(worst, oracle::max_rel_err(fd, exact, 1e-6));

    vec eta(3 * p);
    for (index_t a = 0; a < 3; ++a)
      for (index_t j = 0; j < p; ++j) eta[a * p + j] = inst.state.log_lambda(a, j);
    auto f_lambda = [&](const vec& th) {
      model_state st = inst.state;
      for (index_t a = 0; a < 3; ++a)
        for (index_t j = 0; j < p; ++j) st.log_lambda(a, j) = th[a * p + j];
      return log_marginal(st, inst.data, inst.prior);
    };
    vec fd_l = oracle::central_fd(f_lambda, eta, 1e-5);
    vec exact_l = grad_log_lambda(inst.state, inst.data, inst.prior);
    worst = std::max(worst, oracle::max_rel_err(fd_l, exact_l, 1e-6));
  }
  double el = seconds_since(t0);
  report(1, "analytic knot and shrinkage gradients match finite differences",
         worst < 1e-4 && el < 300.0,
         fmt("worst relative error %.2e over 20 instances, %.1fs", worst, el));
}

// ---- check 2: index kernels vs dense commutation / sliced derivative products ----

void check_kernels() {
  std::mt19937_64 g(23);
  double worst_bits = 0.0;
  for (index_t m = 1; m <= 8; ++m)
    for (index_t n = 1; n <= 8; ++n) {
      mat K = oracle::dense_commutation(m, n);
      index_map t = commutation_index(m, n);
      mat Q = random_mat(m * n, 3, g);
      mat R = random_mat(3, m * n, g);
      worst_bits = std::max(worst_bits, (gather_rows(t, Q) - K * Q).cwiseAbs().maxCoeff());
      worst_bits = std::max(worst_bits, (scatter_cols(t, R) - R * K).cwiseAbs().maxCoeff());
    }

  double worst_rel = 0.0;
  struct shape {
    index_t q_o, q_a, q_s, t_a, t_s;
  };
  for (const shape& s : {shape{2, 1, 2, 2, 3}, shape{1, 2, 3, 1, 2}})
    for (index_t p : {1, 2}) {
      const index_t q = s.q_o + s.q_a + s.q_s;
      mat C = random_mat(3, p * q * p * q, g);
      std::vector<mat> D(3);
      D[1] = random_mat(p * s.q_a * p * s.q_a, s.t_a, g);
      D[2] = random_mat(p * s.q_s * p * s.q_s, s.t_s, g);
      mat dense =
          C * oracle::dense_sigma_beta_inv_deriv(p, s.q_o, s.q_a, s.q_s, {D[0], D[1], D[2]});
      auto [C_s, C_a] = lemma1_slice(C, p, s.q_o, s.q_a, s.q_s);
      mat sliced(3, s.t_a + s.t_s);
      sliced.leftCols(s.t_a) = C_a * D[1];
      sliced.rightCols(s.t_s) = C_s * D[2];
      worst_rel = std::max(worst_rel, (sliced - dense).cwiseAbs().maxCoeff() /
                                          std::max(1.0, dense.cwiseAbs().maxCoeff()));
    }
  report(2, "index commutation kernels and sliced derivative products match dense oracles",
         worst_bits == 0.0 && worst_rel < 1e-12,
         fmt("max |index - dense| = %g (exact), slice relative error %.2e", worst_bits,
             worst_rel));
}

// ---- check 3: frozen-knot, frozen-shrinkage Gibbs vs conjugate closed form ----

void check_conjugate_chain() {
  rng gen(515151);
  const index_t n = 60;
  mat X(n, 2), Y(n, 1);
  for (index_t i = 0; i < n; ++i) {
    X(i, 0) = gen.runif(-2.0, 2.0);
    X(i, 1) = gen.runif(-2.0, 2.0);
    Y(i, 0) = 0.6 * std::sin(1.3 * X(i, 0)) - 0.4 * X(i, 1) + 0.5 * gen.rnorm();
  }
  dataset data = make_dataset(Y, X);
  knot_counts counts;
  counts.surface = 2;
  counts.additive = {1, 1};
  prior_spec prior = default_prior(data, counts, 515152);

  mh_config cfg;
  cfg.update_knots = false;
  cfg.update_lambda = false;
  const index_t M = 20000;
  chain_output chain = run_chain(data, prior, counts, cfg, M, 500, 515153);

  model_state state = initial_state(data, prior, counts);
  design_matrix dm = build_design(data, state.knots);
  const index_t q = dm.q();
  mat V0 = mat::Zero(q, q);
  mat P_o = dm.X_oblock().transpose() * dm.X_oblock();
  V0.topLeftCorner(dm.q_o, dm.q_o) = std::exp(prior.loglambda_mean(0, 0)) * P_o.inverse();
  V0.block(dm.q_o, dm.q_o, dm.q_a, dm.q_a) =
      std::exp(prior.loglambda_mean(1, 0)) * mat::Identity(dm.q_a, dm.q_a);
  V0.bottomRightCorner(dm.q_s, dm.q_s) =
      std::exp(prior.loglambda_mean(2, 0)) * mat::Identity(dm.q_s, dm.q_s);
  auto fit = oracle::conjugate_fit(dm.X, Y.col(0), vec::Zero(q), V0, prior.n0, prior.S0(0, 0));

  double worst_z = 0.0;
  for (index_t r = 0; r < q; ++r) {
    vec series = chain.B_draws.col(r);
    double mean = series.mean();
    double sd = std::sqrt((series.array() - mean).square().sum() / (M - 1.0));
    double se = sd * std::sqrt(std::max(1.0, inefficiency_factor(series)) / M);
    worst_z = std::max(worst_z, std::abs(mean - fit.beta_mean[r]) / std::max(se, 1e-300));
  }
  bool sigma_exact =
      chain.accept.col(0).minCoeff() == 1.0 && chain.accept.col(0).maxCoeff() == 1.0;
  report(3, "frozen-knot Gibbs recovers the conjugate coefficient posterior",
         worst_z < 4.0 && sigma_exact,
         fmt("worst |z| %.2f over %lld coefficients at %lld draws, sigma acceptance %s",
             worst_z, static_cast<long long>(q), static_cast<long long>(M),
             sigma_exact ? "exactly 1" : "not 1"));
}

// ---- check 4: marginal posterior value vs Monte-Carlo integration over B ----

void check_marginal_mc() {
  instance inst = make_instance(15, 2, 1, 2, {1, 1}, 1901, false);
  inst.data.Y *= 0.4;
  inst.prior.loglambda_mean.setConstant(std::log(0.05));
  inst.state.log_lambda = inst.prior.loglambda_mean;
  inst.state.Sigma = mat::Constant(1, 1, 1.0);

  design_matrix dm = build_design(inst.data, inst.state.knots);
  vec mu;
  mat Sb;
  dense_prior_moments(inst, dm, mu, Sb);
  Eigen::LLT<mat> llt(Sb);
  mat L = llt.matrixL();

  const index_t n = inst.data.n(), q = dm.q();
  const vec y = inst.data.Y.col(0);
  const index_t S = 1000000;
  rng gen(777);
  std::vector<double> ll(S);
  vec z(q);
  for (index_t s = 0; s < S; ++s) {
    for (index_t k = 0; k < q; ++k) z[k] = gen.rnorm();
    vec b = mu + L * z;
    ll[s] = -0.5 * n * ln2pi - 0.5 * (y - dm.X * b).squaredNorm();
  }
  double ll_max = *std::max_element(ll.begin(), ll.end());
  double mean_w = 0.0, m2 = 0.0;
  for (index_t s = 0; s < S; ++s) {
    double w = std::exp(ll[s] - ll_max);
    double delta = w - mean_w;
    mean_w += delta / (s + 1);
    m2 += delta * (w - mean_w);
  }
  double sd_w = std::sqrt(m2 / (S - 1));
  double se_log = sd_w / (mean_w * std::sqrt(static_cast<double>(S)));
  double mc = ll_max + std::log(mean_w) + dense_log_priors(inst);
  double lm = log_marginal(inst.state, inst.data, inst.prior);
  report(4, "log marginal matches Monte-Carlo integration over the coefficients",
         se_log < 0.05 && std::abs(lm - mc) < 3.0 * se_log,
         fmt("analytic %.4f vs MC %.4f (+/- %.4f at 1e6 draws)", lm, mc, se_log));
}

// ---- checks 5 and 10: desk benchmark of the three knot updaters ----

struct desk_metrics {
  double surf_if = 0.0, ess = 0.0, knot_acc = 0.0, lambda_acc = 0.0;
};

// joint-updater acceptance rates, reported as the last line
double desk_knot_acc = 0.0, desk_lambda_acc = 0.0;

void check_desk_benchmark() {
  auto t0 = std::chrono::steady_clock::now();
  const int seeds = 5;
  const index_t iterations = 1200, burn = 400;
  knot_counts counts;
  counts.surface = 8;
  counts.additive = {2, 2};

  std::vector<synthetic_dataset> synths(seeds);
  std::vector<prior_spec> priors(seeds);
  for (int s = 0; s < seeds; ++s) {
    dgp_spec spec;
    spec.n = 300;
    spec.p = 1;
    spec.covariates = 2;
    spec.seed = 9000 + s;
    synths[s] = generate_dgp(spec);
    priors[s] = default_prior(synths[s].data, counts, rng::derive(spec.seed, 1));
  }

  desk_metrics metrics[5][3];
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int t = next.fetch_add(1); t < seeds * 3; t = next.fetch_add(1)) {
      const int s = t / 3, u = t % 3;
      mh_config cfg;
      cfg.updater = u == 0   ? updater_kind::bmh
                    : u == 1 ? updater_kind::smh
                             : updater_kind::srwm;
      chain_output chain = run_chain(synths[s].data, priors[s], counts, cfg, iterations,
                                     burn, rng::derive(9000 + s, 10 + u));
      desk_metrics& m = metrics[s][u];
      m.surf_if = surface_if_summary(chain, synths[s].data, 1000, 4242);
      m.ess = ess_per_minute(chain, m.surf_if);
      m.knot_acc = chain.acceptance_rate(1);
      m.lambda_acc = chain.acceptance_rate(2);
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < 4; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  int if_ordered = 0, ess_top = 0;
  double mean_if[3] = {0, 0, 0}, knot_acc = 0.0, lambda_acc = 0.0;
  for (int s = 0; s < seeds; ++s) {
    const desk_metrics* m = metrics[s];
    if (m[0].surf_if < m[1].surf_if && m[1].surf_if < m[2].surf_if) ++if_ordered;
    if (m[0].ess > m[1].ess && m[0].ess > m[2].ess) ++ess_top;
    for (int u = 0; u < 3; ++u) mean_if[u] += m[u].surf_if / seeds;
    knot_acc += m[0].knot_acc / seeds;
    lambda_acc += m[0].lambda_acc / seeds;
  }
  double el = seconds_since(t0);
  report(5, "joint updater beats single-knot beats random-walk on the desk benchmark",
         if_ordered >= 4 && ess_top >= 4 && el < 3600.0,
         fmt("IF ordering holds in %d/5 seeds, joint updater tops ESS/min in %d/5 "
             "(mean IF joint %.2f, single %.2f, walk %.2f), %.0fs",
             if_ordered, ess_top, mean_if[0], mean_if[1], mean_if[2], el));
  desk_knot_acc = knot_acc;
  desk_lambda_acc = lambda_acc;
}

void check_acceptance_band() {
  bool knots_in = desk_knot_acc >= 0.4 && desk_knot_acc <= 0.95;
  bool lambda_in = desk_lambda_acc >= 0.4 && desk_lambda_acc <= 0.95;
  report(10, "joint updater acceptance rates sit in the working band",
         knots_in && lambda_in,
         fmt("knot blocks %.3f, shrinkage blocks %.3f (band [0.40, 0.95])", desk_knot_acc,
             desk_lambda_acc));
}

// ---- check 6: free knots beat oversized fixed grids, most where truth is nonlinear ----

void check_simulation_study() {
  auto t0 = std::chrono::steady_clock::now();
  benchmark_config cfg;
  cfg.replicates = 20;
  cfg.fixed_knot_counts = {5, 15};
  cfg.free_knot_counts = {5};
  cfg.sampler.updater = updater_kind::smh;
  cfg.iterations = 2000;
  cfg.burn_in = 500;
  cfg.workers = 4;
  cfg.seed = 606;
  benchmark_result result = run_benchmark(cfg);
  ratio_summary summary = loss_ratio_summary(result, 15, 5);
  double el = seconds_since(t0);
  report(6, "free knots beat an oversized fixed grid, most on nonlinear surfaces",
         summary.median > 0.0 && summary.median_top_dnl > summary.median_bottom_dnl &&
             static_cast<index_t>(summary.replicates.size()) == cfg.replicates &&
             el < 7200.0,
         fmt("median log loss ratio %.3f, bottom/top nonlinearity terciles %.3f/%.3f, "
             "%zu/20 replicates usable, %.0fs",
             summary.median, summary.median_bottom_dnl, summary.median_top_dnl,
             summary.replicates.size(), el));
}

// ---- check 7: cross-validated predictive score vs the closed multivariate-t form ----

void check_lpds_oracle() {
  rng gen(808);
  const index_t n = 60, D = 3;
  mat X(n, 1), Y(n, 1);
  for (index_t i = 0; i < n; ++i) {
    X(i, 0) = gen.runif(-2.0, 2.0);
    Y(i, 0) = 0.5 + std::sin(1.2 * X(i, 0)) + 0.4 * gen.rnorm();
  }
  dataset data = make_dataset(Y, X);
  knot_counts counts;
  counts.additive = {2};

  auto frozen_prior = [](const dataset& train, const knot_counts& cts, std::uint64_t seed) {
    prior_spec prior = default_prior(train, cts, seed);
    prior.loglambda_mean.setConstant(std::log(0.5));
    prior.loglambda_var.setConstant(0.3);
    return prior;
  };

  lpds_config cfg;
  cfg.folds = D;
  cfg.iterations = 4000;
  cfg.burn_in = 500;
  cfg.workers = 2;
  cfg.prior = frozen_prior;
  cfg.sampler.update_knots = false;
  cfg.sampler.update_lambda = false;

  const std::uint64_t seed = 424242;
  lpds_report rep = lpds(data, counts, cfg, seed);

  auto folds = partition_folds(n, D);
  mat raw = data.covariates();
  raw.array().rowwise() *= data.scale.transpose().array();
  raw.array().rowwise() += data.center.transpose().array();

  bool all_in = rep.per_fold.size() == D;
  double worst_gap = 0.0;
  for (index_t f = 0; f < D && all_in; ++f) {
    std::vector<char> in_test(n, 0);
    for (index_t i : folds[f]) in_test[i] = 1;
    const index_t n_test = static_cast<index_t>(folds[f].size());
    mat Y_train(n - n_test, 1), raw_train(n - n_test, 1);
    mat Y_test(n_test, 1), raw_test(n_test, 1);
    index_t r = 0, s = 0;
    for (index_t i = 0; i < n; ++i) {
      if (in_test[i]) {
        Y_test.row(s) = data.Y.row(i);
        raw_test.row(s++) = raw.row(i);
      } else {
        Y_train.row(r) = data.Y.row(i);
        raw_train.row(r++) = raw.row(i);
      }
    }
    dataset train = make_dataset(Y_train, raw_train);
    const std::uint64_t fold_seed = rng::derive(seed, f);
    prior_spec prior = frozen_prior(train, counts, fold_seed);
    model_state state = initial_state(train, prior, counts);

    design_matrix dm_train = build_design(train, state.knots);
    dataset test_pts = train;
    test_pts.Y = mat::Zero(n_test, 1);
    test_pts.X_o.resize(n_test, train.q_o());
    test_pts.X_o.col(0).setOnes();
    test_pts.X_o.rightCols(1) = train.standardize_raw(raw_test);
    design_matrix dm_test = build_design(test_pts, state.knots);

    const index_t q = dm_train.q();
    mat V0 = mat::Zero(q, q);
    mat P_o = dm_train.X_oblock().transpose() * dm_train.X_oblock();
    V0.topLeftCorner(dm_train.q_o, dm_train.q_o) =
        std::exp(prior.loglambda_mean(0, 0)) * P_o.inverse();
    V0.bottomRightCorner(dm_train.q_a, dm_train.q_a) =
        std::exp(prior.loglambda_mean(1, 0)) * mat::Identity(dm_train.q_a, dm_train.q_a);
    auto fit = oracle::conjugate_fit(dm_train.X, Y_train.col(0), vec::Zero(q), V0, prior.n0,
                                     prior.S0(0, 0));
    double exact = oracle::conjugate_log_predictive(fit, dm_test.X, Y_test.col(0));

    // the fold chain's draws are iid here, so the log-mean has a
    // delta-method standard error
    chain_output chain =
        run_chain(train, prior, counts, cfg.sampler, cfg.iterations, cfg.burn_in, fold_seed);
    const index_t M = chain.n_draws();
    vec ll(M);
    for (index_t t = 0; t < M; ++t) {
      mat S = sigma_at(chain, t);
      mat meanv = dm_test.X * B_at(chain, t);
      vec resid = Y_test.col(0) - meanv.col(0);
      ll[t] = -0.5 * n_test * std::log(2.0 * M_PI * S(0, 0)) -
              0.5 * resid.squaredNorm() / S(0, 0);
    }
    double top = ll.maxCoeff();
    vec w = (ll.array() - top).exp();
    double w_mean = w.mean();
    double w_sd = std::sqrt((w.array() - w_mean).square().sum() / (M - 1.0));
    double se_log = w_sd / (w_mean * std::sqrt(static_cast<double>(M)));
    double gap = std::abs(rep.per_fold[f] - exact) / std::max(se_log, 1e-300);
    worst_gap = std::max(worst_gap, gap);
    if (gap >= 3.0) all_in = false;
  }
  report(7, "cross-validated predictive score matches the closed conjugate form",
         all_in, fmt("worst fold gap %.2f MC standard errors over %lld folds", worst_gap,
                     static_cast<long long>(D)));
}

// ---- check 8: inefficiency factor calibration on known series ----

void check_if_calibration() {
  rng gen(2025);
  const index_t N = 100000;
  vec ar(N), iid(N);
  ar[0] = gen.rnorm();
  const double rho = 0.5, innov = std::sqrt(1.0 - rho * rho);
  for (index_t t = 1; t < N; ++t) ar[t] = rho * ar[t - 1] + innov * gen.rnorm();
  for (index_t t = 0; t < N; ++t) iid[t] = gen.rnorm();
  double if_ar = inefficiency_factor(ar);
  double if_iid = inefficiency_factor(iid);
  bool pass = if_ar > 2.7 && if_ar < 3.3 && if_iid >= 0.9 && if_iid <= 1.2;
  report(8, "inefficiency factor calibrates on AR(1) and white-noise series", pass,
         fmt("AR(0.5) IF %.3f (want 3.0 +/- 10%%), iid IF %.3f (want [0.9, 1.2])", if_ar,
             if_iid));
}

// ---- check 9: manifest reruns and worker counts reproduce bytes ----

void check_determinism() {
  fs::path root = fs::absolute("acceptance_scratch");
  fs::remove_all(root);
  fs::create_directories(root);
  std::string why;
  bool ok = true;
  auto expect = [&](bool cond, const std::string& msg) {
    if (ok && !cond) {
      ok = false;
      why = msg;
    }
  };

  // simulate, then again from its manifest
  fs::path sim1 = root / "sim1", sim2 = root / "sim2";
  expect(run_cli("simulate --out " + quoted(sim1) +
                 " --seed 11 --set dgp.n=60 --set dgp.p=1 --set dgp.covariates=2"
                 " --set dgp.surface_knots=3")
                 .code == 0,
         "simulate failed");
  expect(ok && run_cli("simulate --config " + quoted(sim1 / "manifest.json") + " --out " +
                       quoted(sim2))
                       .code == 0,
         "simulate rerun failed");
  if (ok) expect(same_dir(sim1, sim2, why), why);

  // fit, then again from its manifest
  fs::path fit1 = root / "fit1", fit2 = root / "fit2";
  std::string fit_args = "fit --data " + quoted(sim1 / "data.csv") +
                         " --responses y1 --seed 33 --iterations 50 --burn-in 15"
                         " --set knots.surface=2 --set knots.additive=1 --set grid=10";
  expect(ok && run_cli(fit_args + " --out " + quoted(fit1)).code == 0, "fit failed");
  expect(ok && run_cli("fit --config " + quoted(fit1 / "manifest.json") + " --out " +
                       quoted(fit2))
                       .code == 0,
         "fit rerun failed");
  if (ok) expect(same_dir(fit1, fit2, why), why);

  // cv: worker counts 1 and 4, plus a manifest rerun
  fs::path cv1 = root / "cv1", cv2 = root / "cv2", cv3 = root / "cv3";
  std::string cv_args = "cv --data " + quoted(sim1 / "data.csv") +
                        " --responses y1 --seed 7 --folds 3 --iterations 40 --burn-in 10"
                        " --set knots.surface=1";
  expect(ok && run_cli(cv_args + " --workers 1 --out " + quoted(cv1)).code == 0,
         "cv failed");
  expect(ok && run_cli(cv_args + " --workers 4 --out " + quoted(cv2)).code == 0,
         "cv with 4 workers failed");
  expect(ok && run_cli("cv --config " + quoted(cv1 / "manifest.json") + " --out " +
                       quoted(cv3))
                       .code == 0,
         "cv rerun failed");
  if (ok) expect(same_dir(cv1, cv2, why), why);
  if (ok) expect(same_dir(cv1, cv3, why), why);

  // benchmark: worker counts 1 and 2, plus a manifest rerun
  fs::path b1 = root / "b1", b2 = root / "b2", b3 = root / "b3";
  std::string b_args =
      "benchmark --seed 55 --set benchmark.replicates=2 --set dgp.n=40 --set dgp.p=1"
      " --set dgp.covariates=2 --set dgp.surface_knots=2 --set benchmark.fixed_knots=3"
      " --set benchmark.free_knots=2 --set iterations=20 --set burn_in=5";
  expect(ok && run_cli(b_args + " --workers 1 --out " + quoted(b1)).code == 0,
         "benchmark failed");
  expect(ok && run_cli(b_args + " --workers 2 --out " + quoted(b2)).code == 0,
         "benchmark with 2 workers failed");
  expect(ok && run_cli("benchmark --config " + quoted(b1 / "manifest.json") + " --out " +
                       quoted(b3))
                       .code == 0,
         "benchmark rerun failed");
  if (ok) expect(same_dir(b1, b2, why), why);
  if (ok) expect(same_dir(b1, b3, why), why);

  // diagnose, then again from its manifest
  fs::path d1 = root / "d1", d2 = root / "d2";
  expect(ok && run_cli("diagnose --set diagnose.run=" + fit1.string() +
                       " --set points=20 --seed 66 --out " + quoted(d1))
                       .code == 0,
         "diagnose failed");
  expect(ok && run_cli("diagnose --config " + quoted(d1 / "manifest.json") + " --out " +
                       quoted(d2))
                       .code == 0,
         "diagnose rerun failed");
  if (ok) expect(same_dir(d1, d2, why), why);

  report(9, "every command reruns byte-identically from its manifest", ok,
         ok ? "simulate, fit, cv, benchmark, diagnose; worker counts do not change bytes"
            : why);
}

}  // namespace

int main() {
  std::printf("acceptance gate, %u hardware threads\n",
              std::thread::hardware_concurrency());
  std::fflush(stdout);
  check_gradients();
  check_kernels();
  check_conjugate_chain();
  check_marginal_mc();
  check_desk_benchmark();
  check_simulation_study();
  check_lpds_oracle();
  check_if_calibration();
  check_determinism();
  check_acceptance_band();
  std::printf("%d/10 checks passed\n", 10 - failures);
  return failures;
}
