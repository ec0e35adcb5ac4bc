#pragma once

namespace pat {

// Full command-line driver; returns the process exit code (0 ok,
// 1 validation/check failure, 2 usage error, 3 I/O error).
int run_cli(int argc, char** argv);

}  // namespace pat
