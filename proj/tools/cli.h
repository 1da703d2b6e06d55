// Copyright 2026 The GDAMN Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GDAMN_TOOLS_CLI_H_
#define GDAMN_TOOLS_CLI_H_

#include <iosfwd>

namespace gdamn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

// Entry point of the `gdamn` tool: parses argv, runs one subcommand and maps
// failures to exit codes (2 configuration error, 3 runtime failure).
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace gdamn

#endif  // GDAMN_TOOLS_CLI_H_
