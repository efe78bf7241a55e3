#pragma once
// Command-line front end:
//   tomoforge simulate    --intensity I --out DIR [--phantom NAME --size N --angles A --seed S ...]
//   tomoforge reconstruct --method fbp|tv|proposed --sinogram FILE --out FILE [...]
//   tomoforge evaluate    --recon FILE --gt FILE [--method NAME --intensity I --csv FILE]
//   tomoforge benchmark   --out DIR [--config FILE ...]
//
// Exit codes: 0 success, 1 runtime failure (including any failed benchmark
// cell), 2 usage or configuration error.

#include <ostream>
#include <string>
#include <vector>

namespace tomoforge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Number formatting used in every CSV: shortest round-trip form, "inf" and
/// "nan" for non-finite values.
std::string format_number(double v);

}  // namespace tomoforge::cli
