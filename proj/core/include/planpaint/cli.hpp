#pragma once

// Command-line driver: gen-data, train, eval, render, report. Configuration
// is a flat JSON object of dotted keys (e.g. "train.batch_size"), overridable
// from the command line as --key=value. The PLANNER_HOME environment variable
// overrides the default output root ("runs").

#include <string>
#include <vector>

namespace planpaint {

// Runs one invocation; args exclude the program name. Returns the process
// exit code: 0 success, 1 runtime error (diagnostic on stderr), 2 usage
// error.
int run_cli(const std::vector<std::string>& args);

int run_cli(int argc, const char* const* argv);

}  // namespace planpaint
