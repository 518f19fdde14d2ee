#ifndef SURFREG_TOOLS_CONFIG_HPP
#define SURFREG_TOOLS_CONFIG_HPP

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "surfreg/dataprep.hpp"
#include "surfreg/sampler.hpp"
#include "surfreg/simulation.hpp"

namespace surfreg::cli {

// bad flags, bad config, unreadable input: exit code 2
struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/*! Resolved run configuration: a flat map of documented keys.
 *
 *  Precedence, lowest to highest: built-in defaults, config file
 *  (key = value lines, '#' comments, dots for nesting), repeated
 *  --set key=value flags in order, then the dedicated flags
 *  (--seed, --workers, --out, --data, --responses, --iterations,
 *  --burn-in, --folds).
 *
 *  `out` and `workers` are execution details: they never enter the
 *  manifest or the config hash, so a rerun from a manifest reproduces
 *  the same outputs anywhere at any parallelism.
 */
struct run_config {
  std::string command;
  std::map<std::string, std::string> values;

  const std::string& get(const std::string& key) const;
  void set(const std::string& key, const std::string& value);    // unknown key throws

  bool get_bool(const std::string& key) const;
  double get_double(const std::string& key) const;
  index_t get_index(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::vector<index_t> get_index_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  // canonical "key = value" serialization of the manifest-relevant keys
  std::string canonical() const;
  std::string hash() const;    // FNV-1a 64 of canonical(), hex
};

struct key_spec {
  const char* key;
  const char* default_value;
  const char* help;
};

const std::vector<key_spec>& documented_keys();

run_config default_config(const std::string& command);

// key = value text, or a manifest JSON produced by a previous run
void apply_config_file(run_config& config, const std::string& path);
void apply_set_flag(run_config& config, const std::string& key_equals_value);

// typed views of the model-facing keys
mh_config sampler_config(const run_config& config);
dgp_spec dgp_config(const run_config& config);
knot_counts knot_config(const run_config& config, index_t d);
response_transform transform_config(const run_config& config);
void apply_prior_overrides(const run_config& config, prior_spec& prior);

}  // namespace surfreg::cli

#endif
