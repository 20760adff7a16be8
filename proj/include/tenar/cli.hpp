#pragma once

namespace tenar {

/// Command-line entry point.  Subcommands: simulate, fit, select,
/// forecast, eval, inspect.  Returns 0 on success, 1 on validation or
/// usage errors, 2 on numerical failures.  All randomness is governed
/// by --seed, and artifacts are byte-reproducible; run metadata goes
/// into .meta.json sidecars.
int run_cli(int argc, const char* const* argv);

}  // namespace tenar
