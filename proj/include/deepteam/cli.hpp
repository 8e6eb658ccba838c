#pragma once

namespace deepteam {

// Entry point of the command-line tool. Exit codes: 0 success, 1 other failure, 2 validation failure,
// 3 cap refusal, 4 assumption-check failure.
int run_cli(int argc, char** argv);

}  // namespace deepteam
