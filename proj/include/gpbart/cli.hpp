#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gpbart {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumeric = 2;

// Reads `key = value` lines ('#' comments allowed) into `--key=value`
// arguments.
std::vector<std::string> config_file_args(const std::string& path);

// Keeps large kernel matrices on the heap instead of fresh mmap'd pages;
// the sampler allocates and frees them at a high rate. No-op off glibc.
void tune_allocator();

// Entry point for `gpbart <fit|predict|simulate|benchmark> [options]`.
// Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gpbart
