#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "rtkd/cli.hpp"

namespace rtkd::testing {

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

inline CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

/// Appends `--set k=v` pairs shrinking the architecture and the schedule so
/// a full training subcommand finishes in well under a second.
inline std::vector<std::string> with_tiny_settings(std::vector<std::string> args) {
  for (const char* kv : {"search_size=16", "template_size=8", "dim=8", "layers=2", "heads=2",
                         "mlp_ratio=2", "head_channels=4", "epochs=2", "decay_epoch=1",
                         "batch_size=2", "samples_per_epoch=4"}) {
    args.push_back("--set");
    args.push_back(kv);
  }
  return args;
}

}  // namespace rtkd::testing
