// Copyright 2026 The refgame Authors. All Rights Reserved.
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

#pragma once

// The refgame command line, callable in-process.

#include <iosfwd>
#include <string>
#include <vector>

#include "refgame/config.hpp"

namespace refgame::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kPartialFailure = 3, kServiceError = 4 };

// args excludes the program name, e.g. {"simulate", "--n", "4"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Subcommand bodies over a fully resolved configuration. They throw the core
// error types; run() maps those to exit codes.
int cmd_sample_contexts(const config::RunConfig& rc, std::ostream& out);
int cmd_simulate(const config::RunConfig& rc, std::ostream& out);
int cmd_build_prefs(const config::RunConfig& rc, std::ostream& out);
int cmd_analyze(const config::RunConfig& rc, std::ostream& out);
int cmd_serve(const config::RunConfig& rc, std::ostream& out);
int cmd_export_study(const config::RunConfig& rc, std::ostream& out);

}  // namespace refgame::cli
