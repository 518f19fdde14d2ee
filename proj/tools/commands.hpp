#ifndef SURFREG_TOOLS_COMMANDS_HPP
#define SURFREG_TOOLS_COMMANDS_HPP

#include "config.hpp"

namespace surfreg::cli {

int cmd_fit(const run_config& config);
int cmd_simulate(const run_config& config);
int cmd_benchmark(const run_config& config);
int cmd_cv(const run_config& config);
int cmd_diagnose(const run_config& config);

int dispatch(const run_config& config);

}  // namespace surfreg::cli

#endif
