/*
 * Copyright (C) 2026 The profinfer Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PROFINFER_CLI_H_
#define PROFINFER_CLI_H_

#include <ostream>

#include "profinfer/event_model.h"

namespace profinfer {

inline constexpr int kExitOk = 0;
inline constexpr int kExitAnalysisError = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the profinfer tool. Messages go to |out| and |err|; the
// artifacts land at the paths named on the command line.
int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// A recorded wire stream carries no thread list or backend labels; this
// fills them in from the decoded events.
void InferReplayHeader(TraceSession& session);

}  // namespace profinfer

#endif  // PROFINFER_CLI_H_
