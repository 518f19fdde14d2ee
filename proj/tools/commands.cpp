#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "artifacts.hpp"
#include "surfreg/evaluation.hpp"
#include "surfreg/rng.hpp"
#include "surfreg/simulation.hpp"

namespace surfreg::cli {

namespace {

nlohmann::json manifest_json(const run_config& config) {
  nlohmann::json j;
  j["command"] = config.command;
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& [key, value] : config.values) {
    if (key == "out" || key == "workers") continue;
    cfg[key] = value;
  }
  j["config"] = cfg;
  j["config_hash"] = config.hash();
  j["versions"] = {{"surfreg", "0.1.0"},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                 std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)}};
  return j;
}

std::string prepare_out_dir(const run_config& config) {
  const std::string& out = config.get("out");
  if (out.empty()) throw usage_error("out must name a directory");
  ensure_dir(out);
  return out;
}

void write_manifest(const std::string& out_dir, const run_config& config) {
  write_json(join_path(out_dir, "manifest.json"), manifest_json(config));
}

dataset load_input_data(const run_config& config) {
  const std::string& path = config.get("data");
  if (path.empty())
    throw usage_error(config.command + " needs an input CSV: --data <path> (key 'data')");
  if (!std::filesystem::exists(path))
    throw usage_error("data file '" + path + "' does not exist");
  std::vector<std::string> responses = config.get_string_list("responses");
  if (responses.empty())
    throw usage_error("name the response columns: --responses <a,b,...> (key 'responses')");
  try {
    return load_csv(path, responses, transform_config(config));
  } catch (const usage_error&) {
    throw;
  } catch (const std::exception& e) {
    throw usage_error("cannot load '" + path + "': " + e.what());
  }
}

// JSON has no inf/nan literals; keep them readable instead of null
nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

std::vector<double> to_std(const vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

struct axis_range {
  double lo = 0.0, hi = 0.0;
};

// raw-unit range of covariate j, padded 5% per side
axis_range padded_range(const dataset& data, index_t j) {
  vec raw = data.covariates().col(j) * data.scale[j] + vec::Constant(data.n(), data.center[j]);
  axis_range r{raw.minCoeff(), raw.maxCoeff()};
  double pad = 0.05 * (r.hi - r.lo);
  if (pad <= 0.0) pad = 0.5;
  r.lo -= pad;
  r.hi += pad;
  return r;
}

vec linspace(double lo, double hi, index_t count) {
  if (count == 1) return vec::Constant(1, 0.5 * (lo + hi));
  return vec::LinSpaced(count, lo, hi);
}

/*! Posterior mean/sd surface grids in raw covariate units.
 *
 *  One covariate: surface_mean.csv / surface_sd.csv are R×p matrices over
 *  an R-point grid.  More covariates: per-response ny×nx matrices over
 *  covariates (0, 1) with the others held at their sample mean, files
 *  surface_mean_r<j>.csv / surface_sd_r<j>.csv.
 */
void write_fit_grids(const std::string& out_dir, const chain_output& chain, const dataset& data,
                     index_t resolution) {
  const index_t d = data.d();
  const index_t p = data.p();
  if (d == 1) {
    axis_range rx = padded_range(data, 0);
    mat raw = linspace(rx.lo, rx.hi, resolution);
    surface_summary s = posterior_surface(chain, data, data.standardize_raw(raw));
    const std::string info = "x_lo=" + format_double(rx.lo) + " x_hi=" + format_double(rx.hi) +
                             " nx=" + std::to_string(resolution) + " axis_x=0";
    write_grid_csv(join_path(out_dir, "surface_mean.csv"), info, s.mean);
    write_grid_csv(join_path(out_dir, "surface_sd.csv"), info, s.sd);
    return;
  }

  axis_range rx = padded_range(data, 0);
  axis_range ry = padded_range(data, 1);
  vec gx = linspace(rx.lo, rx.hi, resolution);
  vec gy = linspace(ry.lo, ry.hi, resolution);
  mat raw(resolution * resolution, d);
  for (index_t j = 2; j < d; ++j) raw.col(j).setConstant(data.center[j]);
  for (index_t iy = 0; iy < resolution; ++iy)
    for (index_t ix = 0; ix < resolution; ++ix) {
      raw(iy * resolution + ix, 0) = gx[ix];
      raw(iy * resolution + ix, 1) = gy[iy];
    }
  surface_summary s = posterior_surface(chain, data, data.standardize_raw(raw));
  const std::string info = "x_lo=" + format_double(rx.lo) + " x_hi=" + format_double(rx.hi) +
                           " nx=" + std::to_string(resolution) + " y_lo=" + format_double(ry.lo) +
                           " y_hi=" + format_double(ry.hi) + " ny=" + std::to_string(resolution) +
                           " axis_x=0 axis_y=1";
  for (index_t j = 0; j < p; ++j) {
    mat vm(resolution, resolution), vs(resolution, resolution);
    for (index_t iy = 0; iy < resolution; ++iy)
      for (index_t ix = 0; ix < resolution; ++ix) {
        vm(iy, ix) = s.mean(iy * resolution + ix, j);
        vs(iy, ix) = s.sd(iy * resolution + ix, j);
      }
    write_grid_csv(join_path(out_dir, "surface_mean_r" + std::to_string(j) + ".csv"), info, vm);
    write_grid_csv(join_path(out_dir, "surface_sd_r" + std::to_string(j) + ".csv"), info, vs);
  }
}

void write_fit_heatmaps(const std::string& out_dir, const chain_output& chain,
                        const dataset& data, index_t resolution) {
  const knot_set& shape = chain.knot_shape;
  if (shape.n_coords() == 0) return;
  if (shape.q_s() > 0 && data.d() < 2) return;
  heatmap_request req;
  req.resolution_x = resolution;
  req.resolution_y = resolution;
  heatmap_set maps = knot_heatmap(chain, data, req);
  if (shape.q_s() > 0)
    write_heatmap_csv(join_path(out_dir, "heatmap_surface.csv"), maps.surface, true);
  for (std::size_t v = 0; v < maps.additive.size(); ++v) {
    if (v < shape.additive.size() && shape.additive[v].size() == 0) continue;
    write_heatmap_csv(join_path(out_dir, "heatmap_additive_" + std::to_string(v) + ".csv"),
                      maps.additive[v], false);
  }
}

}  // namespace

int cmd_fit(const run_config& config) {
  dataset data = load_input_data(config);
  knot_counts counts = knot_config(config, data.d());
  const std::uint64_t seed = config.get_u64("seed");
  const index_t resolution = config.get_index("grid");
  if (resolution < 1) throw usage_error("grid must be at least 1");

  prior_spec prior = default_prior(data, counts, rng::derive(seed, 0));
  apply_prior_overrides(config, prior);
  mh_config cfg = sampler_config(config);

  chain_output chain = run_chain(data, prior, counts, cfg, config.get_index("iterations"),
                                 config.get_index("burn_in"), rng::derive(seed, 1));

  const std::string out = prepare_out_dir(config);
  write_chain(out, chain, data);
  if (chain.n_draws() > 0) {
    write_fit_grids(out, chain, data, resolution);
    write_fit_heatmaps(out, chain, data, resolution);
  }
  write_manifest(out, config);

  std::printf("fit: %lld draws (%lld burn-in) on n=%lld, p=%lld, d=%lld\n",
              static_cast<long long>(chain.n_draws()), static_cast<long long>(chain.burn_in),
              static_cast<long long>(data.n()), static_cast<long long>(data.p()),
              static_cast<long long>(data.d()));
  std::printf("acceptance: sigma %.3f, knots %.3f, lambda %.3f\n", chain.acceptance_rate(0),
              chain.acceptance_rate(1), chain.acceptance_rate(2));
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_cv(const run_config& config) {
  dataset data = load_input_data(config);
  knot_counts counts = knot_config(config, data.d());
  const std::uint64_t seed = config.get_u64("seed");

  lpds_config lcfg;
  lcfg.folds = config.get_index("folds");
  lcfg.iterations = config.get_index("iterations");
  lcfg.burn_in = config.get_index("burn_in");
  lcfg.sampler = sampler_config(config);
  lcfg.workers = static_cast<int>(config.get_index("workers"));
  lcfg.prior = [config](const dataset& train, const knot_counts& c, std::uint64_t s) {
    prior_spec prior = default_prior(train, c, s);
    apply_prior_overrides(config, prior);
    return prior;
  };

  lpds_report report = lpds(data, counts, lcfg, seed);

  const std::string out = prepare_out_dir(config);
  nlohmann::json j;
  j["folds"] = report.per_fold.size();
  j["per_fold"] = to_std(report.per_fold);
  j["fold_sizes"] = report.fold_sizes;
  j["draws"] = report.draws;
  j["mean"] = json_number(report.mean());
  write_json(join_path(out, "lpds.json"), j);
  write_manifest(out, config);

  std::printf("lpds mean over %lld folds: %.6f\n",
              static_cast<long long>(report.per_fold.size()), report.mean());
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_simulate(const run_config& config) {
  dgp_spec spec = dgp_config(config);
  synthetic_dataset synth = generate_dgp(spec);
  const index_t n = synth.data.n(), p = synth.data.p(), d = synth.X_raw.cols();

  std::vector<std::string> y_names, x_names, f_names;
  for (index_t j = 0; j < p; ++j) y_names.push_back("y" + std::to_string(j + 1));
  for (index_t j = 0; j < d; ++j) x_names.push_back("x" + std::to_string(j + 1));
  for (index_t j = 0; j < p; ++j) f_names.push_back("f" + std::to_string(j + 1));

  const std::string out = prepare_out_dir(config);

  mat table(n, p + d);
  table << synth.data.Y, synth.X_raw;
  std::vector<std::string> data_header = y_names;
  data_header.insert(data_header.end(), x_names.begin(), x_names.end());
  write_matrix_csv(join_path(out, "data.csv"), data_header, table);

  write_matrix_csv(join_path(out, "truth_train.csv"), f_names, synth.f_train);

  mat eval_table(synth.X_star_raw.rows(), d + p);
  eval_table << synth.X_star_raw, synth.f_star;
  std::vector<std::string> eval_header = x_names;
  eval_header.insert(eval_header.end(), f_names.begin(), f_names.end());
  write_matrix_csv(join_path(out, "eval_points.csv"), eval_header, eval_table);

  write_matrix_csv(join_path(out, "true_knots.csv"), x_names, synth.true_knots);
  write_matrix_csv(join_path(out, "true_B.csv"), y_names, synth.true_B);

  nlohmann::json mixture;
  mixture["weights"] = to_std(synth.mixture_weights);
  std::vector<std::vector<double>> means;
  for (index_t r = 0; r < synth.mixture_means.rows(); ++r)
    means.push_back(to_std(synth.mixture_means.row(r).transpose()));
  mixture["means"] = means;
  mixture["component_variance"] = spec.component_variance;
  mixture["error"]["variance"] = spec.error_variance;
  mixture["error"]["covariance"] = spec.paper_exact ? spec.error_variance : spec.error_covariance;
  mixture["error"]["paper_exact"] = spec.paper_exact;
  write_json(join_path(out, "mixture.json"), mixture);

  write_manifest(out, config);

  std::printf("simulated n=%lld, p=%lld, d=%lld with %lld true surface knots\n",
              static_cast<long long>(n), static_cast<long long>(p), static_cast<long long>(d),
              static_cast<long long>(synth.true_knots.rows()));
  std::string response_list = y_names.front();
  for (std::size_t i = 1; i < y_names.size(); ++i) response_list += "," + y_names[i];
  std::printf("fit with: --data %s/data.csv --responses %s\n", out.c_str(),
              response_list.c_str());
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_benchmark(const run_config& config) {
  benchmark_config bcfg;
  bcfg.replicates = config.get_index("benchmark.replicates");
  bcfg.dgp = dgp_config(config);
  bcfg.fixed_knot_counts = config.get_index_list("benchmark.fixed_knots");
  bcfg.free_knot_counts = config.get_index_list("benchmark.free_knots");
  bcfg.sampler = sampler_config(config);
  bcfg.iterations = config.get_index("iterations");
  bcfg.burn_in = config.get_index("burn_in");
  bcfg.workers = static_cast<int>(config.get_index("workers"));
  bcfg.seed = config.get_u64("seed");

  benchmark_result result = run_benchmark(bcfg);

  const std::string out = prepare_out_dir(config);

  mat cells(static_cast<index_t>(result.cells.size()), 5);
  for (index_t i = 0; i < cells.rows(); ++i) {
    const benchmark_cell& c = result.cells[static_cast<std::size_t>(i)];
    cells(i, 0) = static_cast<double>(c.replicate);
    cells(i, 1) = c.free_knots ? 1.0 : 0.0;
    cells(i, 2) = static_cast<double>(c.knot_count);
    cells(i, 3) = c.loss;
    cells(i, 4) = c.failed ? 1.0 : 0.0;
  }
  write_matrix_csv(join_path(out, "cells.csv"),
                   {"replicate", "free_knots", "knot_count", "loss", "failed"}, cells);

  mat reps(result.dnl.size(), 2);
  for (index_t r = 0; r < reps.rows(); ++r) {
    reps(r, 0) = static_cast<double>(r);
    reps(r, 1) = result.dnl[r];
  }
  write_matrix_csv(join_path(out, "replicates.csv"), {"replicate", "dnl"}, reps);

  nlohmann::json summary;
  summary["pairs"] = nlohmann::json::array();
  for (index_t fixed : bcfg.fixed_knot_counts)
    for (index_t free : bcfg.free_knot_counts) {
      ratio_summary rs = loss_ratio_summary(result, fixed, free);
      nlohmann::json pair;
      pair["fixed_knots"] = fixed;
      pair["free_knots"] = free;
      pair["usable"] = rs.replicates.size();
      pair["median_log_ratio"] = json_number(rs.median);
      pair["median_log_ratio_bottom_dnl"] = json_number(rs.median_bottom_dnl);
      pair["median_log_ratio_top_dnl"] = json_number(rs.median_top_dnl);
      pair["replicates"] = rs.replicates;
      std::vector<nlohmann::json> lr;
      for (index_t i = 0; i < rs.log_ratio.size(); ++i) lr.push_back(json_number(rs.log_ratio[i]));
      pair["log_ratio"] = lr;
      summary["pairs"].push_back(pair);
    }
  summary["failures"] = nlohmann::json::array();
  for (const benchmark_cell& c : result.cells)
    if (c.failed)
      summary["failures"].push_back({{"replicate", c.replicate},
                                     {"free_knots", c.free_knots},
                                     {"knot_count", c.knot_count},
                                     {"error", c.error}});
  write_json(join_path(out, "summary.json"), summary);

  write_manifest(out, config);

  for (const auto& pair : summary["pairs"])
    std::printf("fixed %lld vs free %lld: median log loss ratio %s over %lld replicates\n",
                pair["fixed_knots"].get<long long>(), pair["free_knots"].get<long long>(),
                pair["median_log_ratio"].dump().c_str(), pair["usable"].get<long long>());
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_diagnose(const run_config& config) {
  const std::string& run_dir = config.get("diagnose.run");
  if (run_dir.empty())
    throw usage_error("diagnose needs a fit output directory: --set diagnose.run=<dir>");
  if (!std::filesystem::exists(join_path(run_dir, "index.json")))
    throw usage_error("no chain found in '" + run_dir + "' (missing index.json)");
  const std::string fit_manifest = join_path(run_dir, "manifest.json");
  if (!std::filesystem::exists(fit_manifest))
    throw usage_error("no manifest.json in '" + run_dir + "'; diagnose needs the fit manifest");

  chain_output chain = read_chain(run_dir);

  run_config fit_config = default_config("fit");
  apply_config_file(fit_config, fit_manifest);
  dataset data = load_input_data(fit_config);

  if (chain.n_draws() < 50)
    throw usage_error("need at least 50 stored draws for diagnostics, found " +
                      std::to_string(chain.n_draws()));

  const std::uint64_t seed = config.get_u64("seed");
  const index_t points = config.get_index("points");
  if (points < 1) throw usage_error("points must be at least 1");

  auto column_ifs = [](const mat& draws) {
    std::vector<double> out;
    for (index_t j = 0; j < draws.cols(); ++j)
      out.push_back(inefficiency_factor(draws.col(j)));
    return out;
  };

  std::vector<double> sigma_if = column_ifs(chain.sigma_draws);
  std::vector<double> lambda_if = column_ifs(chain.loglambda_draws);
  std::vector<double> b_if = column_ifs(chain.B_draws);
  double b_mean = 0.0, b_min = b_if.empty() ? 0.0 : b_if.front(), b_max = b_min;
  for (double v : b_if) {
    b_mean += v;
    b_min = std::min(b_min, v);
    b_max = std::max(b_max, v);
  }
  if (!b_if.empty()) b_mean /= static_cast<double>(b_if.size());

  double surface_if = surface_if_summary(chain, data, points, rng::derive(seed, 7));

  const index_t p = chain.p;
  nlohmann::json diag;
  diag["draws"] = chain.n_draws();
  diag["surface_if"] = {{"mean", json_number(surface_if)}, {"points", points}};
  nlohmann::json lj = nlohmann::json::object();
  const char* tags[3] = {"o", "a", "s"};
  for (index_t i = 0; i < 3; ++i)
    for (index_t j = 0; j < p; ++j)
      lj[std::string(tags[i]) + "_r" + std::to_string(j)] =
          json_number(lambda_if[static_cast<std::size_t>(i * p + j)]);
  diag["loglambda_if"] = lj;
  nlohmann::json sj = nlohmann::json::object();
  {
    std::size_t k = 0;
    for (index_t j = 0; j < p; ++j)
      for (index_t i = j; i < p; ++i)
        sj["sigma_" + std::to_string(i) + "_" + std::to_string(j)] = json_number(sigma_if[k++]);
  }
  diag["sigma_if"] = sj;
  diag["B_if"] = {{"mean", json_number(b_mean)},
                  {"min", json_number(b_min)},
                  {"max", json_number(b_max)}};
  diag["acceptance"] = {{"sigma", chain.acceptance_rate(0)},
                        {"knots", chain.acceptance_rate(1)},
                        {"lambda", chain.acceptance_rate(2)}};

  const std::string out = prepare_out_dir(config);
  write_json(join_path(out, "diagnostics.json"), diag);

  // wall-clock dependent: lives next to the other timing numbers only
  nlohmann::json timing;
  timing["fit_seconds_total"] = chain.seconds_total;
  if (chain.seconds_total > 0.0 && std::isfinite(surface_if))
    timing["ess_per_minute"] = ess_per_minute(chain, surface_if);
  else
    timing["ess_per_minute"] = nullptr;
  write_json(join_path(out, "timing.json"), timing);

  write_manifest(out, config);

  std::printf("surface inefficiency over %lld points: %s\n", static_cast<long long>(points),
              json_number(surface_if).dump().c_str());
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int dispatch(const run_config& config) {
  if (config.command == "fit") return cmd_fit(config);
  if (config.command == "simulate") return cmd_simulate(config);
  if (config.command == "benchmark") return cmd_benchmark(config);
  if (config.command == "cv") return cmd_cv(config);
  if (config.command == "diagnose") return cmd_diagnose(config);
  throw usage_error("unknown command '" + config.command + "'");
}

}  // namespace surfreg::cli
