/*
 Copyright 2026 The VATTS Authors.

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      http://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

// `vatts` command line: phi, synth, extract, train, infer, eval, report.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#pragma once

#include <ostream>

namespace vatts::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vatts::cli
