// Copyright 2026 The kktmia Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef KKTMIA_BINARY_IO_H_
#define KKTMIA_BINARY_IO_H_

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>

namespace kktmia::io {

// All raw arrays on disk are little-endian regardless of the host.

inline void WriteU64(std::ostream& out, uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

inline bool ReadU64(std::istream& in, uint64_t* v) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) return false;
  uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r |= static_cast<uint64_t>(buf[i]) << (8 * i);
  *v = r;
  return true;
}

inline void WriteF64(std::ostream& out, double v) {
  WriteU64(out, std::bit_cast<uint64_t>(v));
}

inline bool ReadF64(std::istream& in, double* v) {
  uint64_t bits;
  if (!ReadU64(in, &bits)) return false;
  *v = std::bit_cast<double>(bits);
  return true;
}

inline void WriteF32(std::ostream& out, float v) {
  const uint32_t bits = std::bit_cast<uint32_t>(v);
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(buf, 4);
}

inline bool ReadF32(std::istream& in, float* v) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) return false;
  uint32_t r = 0;
  for (int i = 0; i < 4; ++i) r |= static_cast<uint32_t>(buf[i]) << (8 * i);
  *v = std::bit_cast<float>(r);
  return true;
}

}  // namespace kktmia::io

#endif  // KKTMIA_BINARY_IO_H_
