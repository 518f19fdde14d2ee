#include "config.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace surfreg::cli {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string field;
  while (std::getline(ss, field, sep)) out.push_back(trim(field));
  return out;
}

}  // namespace

const std::vector<key_spec>& documented_keys() {
  static const std::vector<key_spec> keys = {
      {"seed", "0", "master seed; every chain, fold and replicate derives from it"},
      {"workers", "1", "worker threads for folds and replicates (not part of the manifest)"},
      {"out", "surfreg_out", "output directory (not part of the manifest)"},
      {"data", "", "input CSV path (fit, cv)"},
      {"responses", "", "comma-separated response column names in the CSV"},
      {"transform", "none", "response transform: none | logit"},
      {"knots.surface", "0", "surface knot count"},
      {"knots.additive", "", "per-covariate additive knot counts; one value broadcasts"},
      {"iterations", "2000", "recorded posterior draws"},
      {"burn_in", "500", "discarded warm-up sweeps"},
      {"folds", "5", "cross-validation folds (cv)"},
      {"points", "1000", "random surface points for inefficiency summaries (diagnose)"},
      {"grid", "70", "grid resolution per axis for surface and heat-map outputs"},
      {"sampler.updater", "bmh", "knot updater: bmh | smh | srwm"},
      {"sampler.newton_steps", "2", "Newton iterations tailoring each MH proposal"},
      {"sampler.proposal_df", "5", "degrees of freedom of the t proposal (> 2)"},
      {"sampler.step_damping", "1", "initial Newton step factor"},
      {"sampler.knot_block_size", "0", "knots per BMH block; 0 puts all in one block"},
      {"sampler.srwm_scale", "0.25", "random-walk proposal sd (srwm)"},
      {"sampler.srwm_adapt_sweeps", "300", "adaptive sweeps targeting 0.25 acceptance (srwm)"},
      {"sampler.update_sigma", "true", "sample the error covariance"},
      {"sampler.update_knots", "true", "sample knot locations (false freezes the prior centers)"},
      {"sampler.update_lambda", "true", "sample the shrinkage parameters"},
      {"prior.n0", "10", "inverse-Wishart prior degrees of freedom"},
      {"prior.gram_o", "gram", "linear-block prior precision: gram | identity"},
      {"prior.gram_a", "identity", "additive-block prior precision: gram | identity"},
      {"prior.gram_s", "identity", "surface-block prior precision: gram | identity"},
      {"dgp.n", "200", "synthetic observations"},
      {"dgp.p", "2", "synthetic responses"},
      {"dgp.covariates", "5", "synthetic covariates"},
      {"dgp.components", "5", "mixture components"},
      {"dgp.component_variance", "0.1", "spherical mixture component variance"},
      {"dgp.surface_knots", "5", "true surface knots"},
      {"dgp.error_variance", "0.1", "error variance"},
      {"dgp.error_covariance", "0.05", "error covariance between responses"},
      {"dgp.paper_exact", "false", "covariance 0.1 with 1e-6 jitter instead of the default"},
      {"benchmark.replicates", "20", "replicate datasets in the benchmark study"},
      {"benchmark.fixed_knots", "5,15", "fixed-knot model sizes"},
      {"benchmark.free_knots", "5", "free-knot model sizes"},
      {"diagnose.run", "", "fit output directory to analyze (diagnose)"},
  };
  return keys;
}

run_config default_config(const std::string& command) {
  run_config config;
  config.command = command;
  for (const auto& spec : documented_keys()) config.values[spec.key] = spec.default_value;
  return config;
}

const std::string& run_config::get(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) throw usage_error("unknown config key '" + key + "'");
  return it->second;
}

void run_config::set(const std::string& key, const std::string& value) {
  auto it = values.find(key);
  if (it == values.end())
    throw usage_error("unknown config key '" + key + "' (see --keys for the schema)");
  it->second = value;
}

bool run_config::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw usage_error("config key '" + key + "': expected true/false, got '" + v + "'");
}

double run_config::get_double(const std::string& key) const {
  const std::string& v = get(key);
  errno = 0;
  char* end = nullptr;
  double x = std::strtod(v.c_str(), &end);
  if (errno != 0 || end == v.c_str() || *end != '\0')
    throw usage_error("config key '" + key + "': expected a number, got '" + v + "'");
  return x;
}

index_t run_config::get_index(const std::string& key) const {
  double x = get_double(key);
  auto i = static_cast<index_t>(x);
  if (x < 0 || static_cast<double>(i) != x)
    throw usage_error("config key '" + key + "': expected a non-negative integer");
  return i;
}

std::uint64_t run_config::get_u64(const std::string& key) const {
  const std::string& v = get(key);
  errno = 0;
  char* end = nullptr;
  std::uint64_t x = std::strtoull(v.c_str(), &end, 10);
  if (errno != 0 || end == v.c_str() || *end != '\0' || v.find('-') != std::string::npos)
    throw usage_error("config key '" + key + "': expected an unsigned integer, got '" + v + "'");
  return x;
}

std::vector<index_t> run_config::get_index_list(const std::string& key) const {
  std::vector<index_t> out;
  for (const auto& field : split(get(key), ',')) {
    if (field.empty()) continue;
    errno = 0;
    char* end = nullptr;
    long v = std::strtol(field.c_str(), &end, 10);
    if (errno != 0 || end == field.c_str() || *end != '\0' || v < 0)
      throw usage_error("config key '" + key + "': bad list entry '" + field + "'");
    out.push_back(static_cast<index_t>(v));
  }
  return out;
}

std::vector<std::string> run_config::get_string_list(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& field : split(get(key), ','))
    if (!field.empty()) out.push_back(field);
  return out;
}

std::string run_config::canonical() const {
  std::string out = "command = " + command + "\n";
  for (const auto& [key, value] : values) {
    if (key == "out" || key == "workers") continue;
    out += key + " = " + value + "\n";
  }
  return out;
}

std::string run_config::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void apply_config_file(run_config& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  std::string text = buffer.str();

  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    // manifest from a previous run
    nlohmann::json manifest;
    try {
      manifest = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw usage_error("config file '" + path + "': bad JSON: " + e.what());
    }
    if (manifest.contains("command") && manifest["command"].get<std::string>() != config.command)
      throw usage_error("manifest '" + path + "' was written by command '" +
                        manifest["command"].get<std::string>() + "', not '" + config.command +
                        "'");
    if (!manifest.contains("config") || !manifest["config"].is_object())
      throw usage_error("manifest '" + path + "' has no config object");
    for (const auto& [key, value] : manifest["config"].items())
      config.set(key, value.get<std::string>());
    return;
  }

  std::stringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw usage_error("config file '" + path + "' line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    config.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

void apply_set_flag(run_config& config, const std::string& key_equals_value) {
  const auto eq = key_equals_value.find('=');
  if (eq == std::string::npos)
    throw usage_error("--set expects key=value, got '" + key_equals_value + "'");
  config.set(trim(key_equals_value.substr(0, eq)), trim(key_equals_value.substr(eq + 1)));
}

mh_config sampler_config(const run_config& config) {
  mh_config cfg;
  const std::string& updater = config.get("sampler.updater");
  if (updater == "bmh")
    cfg.updater = updater_kind::bmh;
  else if (updater == "smh")
    cfg.updater = updater_kind::smh;
  else if (updater == "srwm")
    cfg.updater = updater_kind::srwm;
  else
    throw usage_error("sampler.updater: expected bmh|smh|srwm, got '" + updater + "'");
  cfg.newton_steps = static_cast<int>(config.get_index("sampler.newton_steps"));
  cfg.proposal_df = config.get_double("sampler.proposal_df");
  cfg.step_damping = config.get_double("sampler.step_damping");
  cfg.knot_block_size = config.get_index("sampler.knot_block_size");
  cfg.srwm_scale = config.get_double("sampler.srwm_scale");
  cfg.srwm_adapt_sweeps = static_cast<int>(config.get_index("sampler.srwm_adapt_sweeps"));
  cfg.update_sigma = config.get_bool("sampler.update_sigma");
  cfg.update_knots = config.get_bool("sampler.update_knots");
  cfg.update_lambda = config.get_bool("sampler.update_lambda");
  if (cfg.proposal_df <= 2.0) throw usage_error("sampler.proposal_df must exceed 2");
  return cfg;
}

dgp_spec dgp_config(const run_config& config) {
  dgp_spec spec;
  spec.n = config.get_index("dgp.n");
  spec.p = config.get_index("dgp.p");
  spec.covariates = config.get_index("dgp.covariates");
  spec.mixture_components = config.get_index("dgp.components");
  spec.component_variance = config.get_double("dgp.component_variance");
  spec.surface_knots = config.get_index("dgp.surface_knots");
  spec.error_variance = config.get_double("dgp.error_variance");
  spec.error_covariance = config.get_double("dgp.error_covariance");
  spec.paper_exact = config.get_bool("dgp.paper_exact");
  spec.seed = config.get_u64("seed");
  return spec;
}

knot_counts knot_config(const run_config& config, index_t d) {
  knot_counts counts;
  counts.surface = config.get_index("knots.surface");
  std::vector<index_t> additive = config.get_index_list("knots.additive");
  if (additive.size() == 1 && d > 1) additive.assign(static_cast<std::size_t>(d), additive[0]);
  if (!additive.empty() && static_cast<index_t>(additive.size()) != d)
    throw usage_error("knots.additive: expected one count or one per covariate (" +
                      std::to_string(d) + ")");
  counts.additive = std::move(additive);
  return counts;
}

response_transform transform_config(const run_config& config) {
  const std::string& t = config.get("transform");
  if (t == "none") return response_transform::none;
  if (t == "logit") return response_transform::logit;
  throw usage_error("transform: expected none|logit, got '" + t + "'");
}

void apply_prior_overrides(const run_config& config, prior_spec& prior) {
  prior.n0 = config.get_double("prior.n0");
  if (prior.n0 <= 0.0) throw usage_error("prior.n0 must be positive");
  auto gram_of = [&](const char* key) {
    const std::string& v = config.get(key);
    if (v == "gram") return gram_choice::gram;
    if (v == "identity") return gram_choice::identity;
    throw usage_error(std::string(key) + ": expected gram|identity, got '" + v + "'");
  };
  prior.P_o = gram_of("prior.gram_o");
  prior.P_a = gram_of("prior.gram_a");
  prior.P_s = gram_of("prior.gram_s");
}

}  // namespace surfreg::cli
