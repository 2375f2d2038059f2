#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Entry point behind the `exformer` binary. args[0] is the program name.
// Subcommands: synth-data, pretrain-embedder, train, train-semi, evaluate,
// extract. Returns 0 on success, 1 on usage or configuration errors and 2 on
// runtime failures; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tse::cli
