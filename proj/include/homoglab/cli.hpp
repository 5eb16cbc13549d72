#pragma once

namespace homoglab::cli {

// Entry point behind the homoglab binary. Exit codes: 0 ok, 2 config error,
// 3 solver failure, 4 I/O error. Failures print one machine-readable line
// to stderr: homoglab-error: kind=<config|solver|io> message="...".
int run_cli(int argc, const char* const* argv);

}  // namespace homoglab::cli
