#ifndef IMPX_CLI_HPP
#define IMPX_CLI_HPP

#include <ostream>

#include "impx/config.hpp"

namespace impx {

// Subcommand entry points. Exit-code contract: 0 pass, 1 check failure, 2 invalid config.
int cmd_solve_corrector(const RunConfig& cfg, std::ostream& log);
int cmd_verify(const RunConfig& cfg, std::ostream& log);
int cmd_simulate(const RunConfig& cfg, std::ostream& log);
int cmd_converge(const RunConfig& cfg, std::ostream& log);

} // namespace impx

#endif
