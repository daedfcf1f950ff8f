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

#ifndef PROFINFER_SESSION_IO_H_
#define PROFINFER_SESSION_IO_H_

#include <filesystem>
#include <string>
#include <string_view>

#include "profinfer/event_model.h"

namespace profinfer {

// JSON Lines: line 0 is {"profinfer_header": {...,"v":1}}, then one RawEvent
// object per line. Addresses are written as "0x..." strings.
std::string EncodeSessionJsonl(const TraceSession& session);
TraceSession DecodeSessionJsonl(std::string_view text);

// Compact framing of the same fields: magic "PFIS", version byte, then
// u32-length-prefixed frames (header frame first, one frame per event).
std::string EncodeSessionBinary(const TraceSession& session);
TraceSession DecodeSessionBinary(std::string_view bytes);

enum class SessionFormat { kJsonl, kBinary };

// Writes binary when |path| ends in ".bin", JSON Lines otherwise.
void WriteSessionFile(const std::filesystem::path& path, const TraceSession& session);
// Detects the format from the leading bytes.
TraceSession ReadSessionFile(const std::filesystem::path& path);

std::string ReadFileBytes(const std::filesystem::path& path);
void WriteFileBytes(const std::filesystem::path& path, std::string_view bytes);

std::string AddrToHex(Addr addr);

}  // namespace profinfer

#endif  // PROFINFER_SESSION_IO_H_
