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

#ifndef PROFINFER_SRC_BYTE_IO_H_
#define PROFINFER_SRC_BYTE_IO_H_

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <type_traits>

#include "profinfer/error.h"

namespace profinfer::internal {

// Little-endian append-only writer.
class ByteWriter {
 public:
  template <typename T>
  void Put(T value) {
    static_assert(std::is_integral_v<T>);
    using U = std::make_unsigned_t<T>;
    U u = static_cast<U>(value);
    for (size_t i = 0; i < sizeof(T); ++i) {
      buf_.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
    }
  }
  void PutDouble(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    Put(bits);
  }
  void PutBytes(std::string_view bytes) { buf_.append(bytes); }
  void PutString(std::string_view s) {
    Put(static_cast<uint32_t>(s.size()));
    buf_.append(s);
  }
  void PutZeros(size_t n) { buf_.append(n, '\0'); }

  size_t size() const { return buf_.size(); }
  std::string& data() { return buf_; }
  std::string Take() { return std::move(buf_); }

 private:
  std::string buf_;
};

// Bounds-checked little-endian reader. |base_offset| is added to positions
// reported in errors so callers can point at the byte in the whole stream.
class ByteReader {
 public:
  explicit ByteReader(std::string_view data, size_t base_offset = 0)
      : data_(data), base_(base_offset) {}

  template <typename T>
  T Get() {
    static_assert(std::is_integral_v<T>);
    Need(sizeof(T));
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<U>(static_cast<uint8_t>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  double GetDouble() {
    uint64_t bits = Get<uint64_t>();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  std::string_view GetBytes(size_t n) {
    Need(n);
    std::string_view out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::string GetString() {
    uint32_t n = Get<uint32_t>();
    return std::string(GetBytes(n));
  }

  size_t pos() const { return pos_; }
  size_t offset() const { return base_ + pos_; }
  size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  void Need(size_t n) const {
    if (data_.size() - pos_ < n) {
      throw Error(ErrorCode::kStream, "truncated input at byte offset " +
                                          std::to_string(base_ + pos_) + " (need " +
                                          std::to_string(n) + " bytes)");
    }
  }

  std::string_view data_;
  size_t base_;
  size_t pos_ = 0;
};

}  // namespace profinfer::internal

#endif  // PROFINFER_SRC_BYTE_IO_H_
