#include "artifacts.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "config.hpp"

namespace surfreg::cli {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw usage_error("cannot write '" + path + "'");
  return out;
}

const char* component_tag(index_t i) { return i == 0 ? "o" : (i == 1 ? "a" : "s"); }

}  // namespace

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw usage_error("cannot create output directory '" + dir + "': " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  open_out(path) << text;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  open_out(path) << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw usage_error("bad JSON in '" + path + "': " + e.what());
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_matrix_csv(const std::string& path, const std::vector<std::string>& header,
                      const mat& values) {
  std::ofstream out = open_out(path);
  for (std::size_t c = 0; c < header.size(); ++c)
    out << (c ? "," : "") << header[c];
  out << '\n';
  for (index_t i = 0; i < values.rows(); ++i) {
    for (index_t j = 0; j < values.cols(); ++j)
      out << (j ? "," : "") << format_double(values(i, j));
    out << '\n';
  }
}

mat read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') continue;
    if (first) {
      first = false;
      // a header line is anything that does not parse as a number
      char* end = nullptr;
      std::strtod(line.c_str(), &end);
      if (end == line.c_str()) continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
      char* end = nullptr;
      double v = std::strtod(field.c_str(), &end);
      if (end == field.c_str()) throw usage_error("bad number '" + field + "' in " + path);
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw usage_error("ragged rows in " + path);
    rows.push_back(std::move(row));
  }
  mat out(static_cast<index_t>(rows.size()),
          rows.empty() ? 0 : static_cast<index_t>(rows.front().size()));
  for (index_t i = 0; i < out.rows(); ++i)
    for (index_t j = 0; j < out.cols(); ++j)
      out(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return out;
}

void write_grid_csv(const std::string& path, const std::string& info_line, const mat& values) {
  std::ofstream out = open_out(path);
  out << "# " << info_line << '\n';
  for (index_t i = 0; i < values.rows(); ++i) {
    for (index_t j = 0; j < values.cols(); ++j)
      out << (j ? "," : "") << format_double(values(i, j));
    out << '\n';
  }
}

void write_heatmap_csv(const std::string& path, const heatmap_grid& grid, bool two_d) {
  std::ofstream out = open_out(path);
  out << "# x_lo=" << format_double(grid.x_lo) << " x_hi=" << format_double(grid.x_hi)
      << " nx=" << grid.counts.cols();
  if (two_d)
    out << " y_lo=" << format_double(grid.y_lo) << " y_hi=" << format_double(grid.y_hi)
        << " ny=" << grid.counts.rows();
  out << " clamped=" << grid.clamped << '\n';
  for (index_t i = 0; i < grid.counts.rows(); ++i) {
    for (index_t j = 0; j < grid.counts.cols(); ++j)
      out << (j ? "," : "") << grid.counts(i, j);
    out << '\n';
  }
}

void write_chain(const std::string& dir, const chain_output& chain, const dataset& data) {
  const index_t p = chain.p;
  const knot_set& shape = chain.knot_shape;
  const index_t d = shape.surface.cols();

  std::vector<std::string> knot_header;
  for (index_t j = 0; j < shape.q_s(); ++j)
    for (index_t c = 0; c < d; ++c)
      knot_header.push_back("s" + std::to_string(j) + "_c" + std::to_string(c));
  for (std::size_t v = 0; v < shape.additive.size(); ++v)
    for (index_t k = 0; k < shape.additive[v].size(); ++k)
      knot_header.push_back("a" + std::to_string(v) + "_k" + std::to_string(k));
  write_matrix_csv(join_path(dir, "draws_knots.csv"), knot_header, chain.knot_draws);

  std::vector<std::string> ll_header;
  for (index_t i = 0; i < 3; ++i)
    for (index_t j = 0; j < p; ++j)
      ll_header.push_back(std::string(component_tag(i)) + "_r" + std::to_string(j));
  write_matrix_csv(join_path(dir, "draws_loglambda.csv"), ll_header, chain.loglambda_draws);

  std::vector<std::string> sigma_header;
  for (index_t j = 0; j < p; ++j)
    for (index_t i = j; i < p; ++i)
      sigma_header.push_back("sigma_" + std::to_string(i) + "_" + std::to_string(j));
  write_matrix_csv(join_path(dir, "draws_sigma.csv"), sigma_header, chain.sigma_draws);

  const index_t q = p > 0 ? chain.B_draws.cols() / p : 0;
  std::vector<std::string> b_header;
  for (index_t j = 0; j < p; ++j)
    for (index_t i = 0; i < q; ++i)
      b_header.push_back("b" + std::to_string(i) + "_r" + std::to_string(j));
  write_matrix_csv(join_path(dir, "draws_B.csv"), b_header, chain.B_draws);

  write_matrix_csv(join_path(dir, "accept.csv"), {"sigma", "knots", "lambda"}, chain.accept);

  nlohmann::json index;
  index["p"] = p;
  index["q_o"] = chain.q_o;
  index["d"] = d;
  index["n"] = data.n();
  index["response_names"] = data.response_names;
  index["covariate_names"] = data.covariate_names;
  index["knot_shape"]["surface"] = shape.q_s();
  index["knot_shape"]["dimension"] = d;
  std::vector<index_t> additive_counts;
  for (const auto& a : shape.additive) additive_counts.push_back(a.size());
  index["knot_shape"]["additive"] = additive_counts;
  index["draws"] = chain.n_draws();
  index["burn_in"] = chain.burn_in;
  index["seed"] = chain.seed;
  index["acceptance"]["sigma"] = chain.acceptance_rate(0);
  index["acceptance"]["knots"] = chain.acceptance_rate(1);
  index["acceptance"]["lambda"] = chain.acceptance_rate(2);
  index["files"] = {{"knots", "draws_knots.csv"},
                    {"loglambda", "draws_loglambda.csv"},
                    {"sigma", "draws_sigma.csv"},
                    {"B", "draws_B.csv"},
                    {"accept", "accept.csv"}};
  write_json(join_path(dir, "index.json"), index);

  nlohmann::json timing;
  timing["seconds"] = {{"sigma", chain.seconds_sigma},
                       {"knots", chain.seconds_knots},
                       {"lambda", chain.seconds_lambda},
                       {"total", chain.seconds_total}};
  write_json(join_path(dir, "timing.json"), timing);
}

chain_output read_chain(const std::string& dir) {
  nlohmann::json index = read_json(join_path(dir, "index.json"));
  chain_output chain;
  chain.p = index.at("p").get<index_t>();
  chain.q_o = index.at("q_o").get<index_t>();
  chain.burn_in = index.at("burn_in").get<index_t>();
  chain.seed = index.at("seed").get<std::uint64_t>();
  const auto d = index.at("knot_shape").at("dimension").get<index_t>();
  chain.knot_shape.surface = mat::Zero(index.at("knot_shape").at("surface").get<index_t>(), d);
  for (const auto& count : index.at("knot_shape").at("additive"))
    chain.knot_shape.additive.push_back(vec::Zero(count.get<index_t>()));

  const auto files = index.at("files");
  chain.knot_draws = read_matrix_csv(join_path(dir, files.at("knots").get<std::string>()));
  chain.loglambda_draws =
      read_matrix_csv(join_path(dir, files.at("loglambda").get<std::string>()));
  chain.sigma_draws = read_matrix_csv(join_path(dir, files.at("sigma").get<std::string>()));
  chain.B_draws = read_matrix_csv(join_path(dir, files.at("B").get<std::string>()));
  chain.accept = read_matrix_csv(join_path(dir, files.at("accept").get<std::string>()));

  const std::string timing_path = join_path(dir, "timing.json");
  if (std::filesystem::exists(timing_path)) {
    nlohmann::json timing = read_json(timing_path);
    chain.seconds_sigma = timing.at("seconds").at("sigma").get<double>();
    chain.seconds_knots = timing.at("seconds").at("knots").get<double>();
    chain.seconds_lambda = timing.at("seconds").at("lambda").get<double>();
    chain.seconds_total = timing.at("seconds").at("total").get<double>();
  }
  return chain;
}

}  // namespace surfreg::cli
