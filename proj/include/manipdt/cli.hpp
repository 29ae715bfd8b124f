#pragma once
#include <ostream>
#include <string>
#include <vector>

// Command-line entrypoint: plan / gen-data / train / finetune / eval /
// rollout, bound together by one experiment config. Lives in the library so
// tests can drive it in-process.
namespace cli {

// `args` excludes the program name. Human output goes to `out`, diagnostics
// to `err`. Returns the process exit code: 0 success, 1 operational failure,
// 2 usage or config error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cli
