/* Copyright 2026 The dfq Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef DFQ_ERROR_HPP_
#define DFQ_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace dfq {

// Mirrors dfq_status in the C API one-to-one (minus DFQ_OK).
enum class ErrorCode {
  kInvalidArgument = 1,
  kContract,
  kDomain,
  kNumeric,
  kStructure,
  kIngestion,
  kDataFreeViolation,
  kDiverged,
  kIo,
  kInternal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

#define DFQ_CHECK(cond, code, msg)          \
  do {                                      \
    if (!(cond)) ::dfq::fail((code), (msg)); \
  } while (0)

}  // namespace dfq

#endif  // DFQ_ERROR_HPP_
