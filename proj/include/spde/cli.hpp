#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace spde::cli {

/// Parsed run configuration. `dt`, `steps`, `horizon` obey T = N dt; any two
/// determine the third, and all three together must be consistent.
struct RunConfig {
    std::string command;  // simulate | weak-order | strong-order | regularity |
                          // malliavin-check | duality-check
    int modes = 64;
    double dt = 0.0;      // 0 = unset
    int steps = -1;       // -1 = unset (0 is a valid request for simulate)
    double horizon = 0.0; // 0 = unset; defaults to 0.25 when underdetermined
    long samples = 10000;
    std::uint64_t seed = 1;
    std::string bundle = "smooth-default";
    double delta = 0.0;
    double tau = 0.0;
    double beta = 0.45;
    std::vector<double> levels;  // sorted descending, nested by powers of 2
    std::string reference = "finest";  // finest | closed-form (weak-order)
    int ref_refine = 8;
    std::string out;     // output file; defaults to "<command>.{csv,json}"
    std::string format = "csv";
};

/// Thrown on unknown keys, inconsistent T/N/dt, or non-nested level lists.
struct usage_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Parse argv (and an optional key = value file via --config). Flags override
/// file values. Throws usage_error; --help throws help_requested.
struct help_requested {
    std::string text;
};
RunConfig parse_config(const std::vector<std::string>& args);

/// Execute a parsed configuration. Returns the process exit code:
/// 0 success, 2 usage error, 3 numerical failure, 4 unwritable output.
int run(const RunConfig& config);

/// parse + run + error reporting; the main() body.
int cli_main(int argc, char** argv);

/// Locale-independent float formatting with 17 significant digits.
std::string format_double(double v);

}  // namespace spde::cli
