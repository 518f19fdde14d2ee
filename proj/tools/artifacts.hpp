#ifndef SURFREG_TOOLS_ARTIFACTS_HPP
#define SURFREG_TOOLS_ARTIFACTS_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "surfreg/evaluation.hpp"
#include "surfreg/sampler.hpp"

namespace surfreg::cli {

/*! Output conventions.
 *
 *  Numeric CSVs print %.17g so every double round-trips exactly; a
 *  rerun from a manifest is byte-identical.  Wall-clock measurements
 *  are kept out of the deterministic files: they live in timing.json
 *  only.  Grid CSVs are plain matrices after one '#' header line that
 *  carries bounds and resolution.
 */

void ensure_dir(const std::string& dir);
std::string join_path(const std::string& dir, const std::string& name);

void write_text(const std::string& path, const std::string& text);
void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

std::string format_double(double v);

void write_matrix_csv(const std::string& path, const std::vector<std::string>& header,
                      const mat& values);
// rows after an optional leading header/comment line
mat read_matrix_csv(const std::string& path);

void write_grid_csv(const std::string& path, const std::string& info_line, const mat& values);
void write_heatmap_csv(const std::string& path, const heatmap_grid& grid, bool two_d);

// draws_*.csv + accept.csv + index.json + timing.json under dir
void write_chain(const std::string& dir, const chain_output& chain, const dataset& data);
chain_output read_chain(const std::string& dir);

}  // namespace surfreg::cli

#endif
