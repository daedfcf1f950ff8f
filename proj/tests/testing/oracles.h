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


#ifndef PROFINFER_TESTS_TESTING_ORACLES_H_
#define PROFINFER_TESTS_TESTING_ORACLES_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "profinfer/event_model.h"
#include "profinfer/proftime.h"

namespace profinfer::testing {

// Brute-force per-op figures for one time window, computed straight from
// the raw events without the ingest pipeline.
struct NaiveOp {
  int64_t min_enter = INT64_MAX;
  int64_t max_exit = INT64_MIN;
  std::optional<std::vector<int64_t>> pmc_sum;
  int64_t elapsed() const { return max_exit - min_enter; }
};

// Keys by op_addr. Enter and exit readings are matched per (tid, addr) in
// timestamp order by a quadratic scan.
std::map<Addr, NaiveOp> NaiveOpScan(const TraceSession& session, int64_t window_begin,
                                    int64_t window_end);

// Mean over the row's experts of the distance back to their previous use,
// searching every earlier row; i + 1 when never used.
double BruteReuseDistance(const std::vector<std::vector<uint32_t>>& rows, size_t i);

// Ordinary least squares through the normal equations, in plain doubles.
struct NaiveFit {
  double slope = 0, intercept = 0;
};
NaiveFit NaiveLeastSquares(const std::vector<double>& x, const std::vector<double>& y);

// Parsed Chrome trace: the rebuilt document plus the raw duration events.
struct ParsedTrace {
  TimelineDoc doc;
  size_t metadata_events = 0;
  struct Raw {
    std::string ph, name, cat;
    double ts = 0, dur = 0;
    int64_t pid = 0, tid = 0;
  };
  std::vector<Raw> complete_events;
};

// Throws std::runtime_error on anything that is not a well-formed trace.
ParsedTrace ParseChromeTrace(const std::string& text);

}  // namespace profinfer::testing

#endif  // PROFINFER_TESTS_TESTING_ORACLES_H_
