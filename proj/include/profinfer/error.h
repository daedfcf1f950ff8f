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

#ifndef PROFINFER_ERROR_H_
#define PROFINFER_ERROR_H_

#include <stdexcept>
#include <string>

namespace profinfer {

enum class ErrorCode {
  kConfig,
  kDomain,
  kParse,
  kIo,
  kStream,
  kUnbalancedProbe,
  kStructural,
  kDagUnavailable,
  kUnknownIteration,
  kMetricUnavailable,
  kNotFound,
  kDegenerateFit,
  kUnsupported,
};

const char* ErrorCodeName(ErrorCode code);

// All failures raised by the library carry a code so callers (notably the
// CLI) can map them onto exit statuses without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace profinfer

#endif  // PROFINFER_ERROR_H_
