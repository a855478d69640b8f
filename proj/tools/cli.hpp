#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace vr4::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitInternal = 2;

// Runs one video-r4 invocation. `args` excludes the program name; `env`
// supplies VIDEOR4_* overrides. Returns the process exit status.
int run(const std::vector<std::string>& args, const std::map<std::string, std::string>& env, std::ostream& out,
        std::ostream& err);

} // namespace vr4::cli
