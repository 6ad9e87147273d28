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

#ifndef DFQ_DIGEST_HPP_
#define DFQ_DIGEST_HPP_

#include <torch/torch.h>

#include <string>
#include <string_view>

namespace dfq {

// Hex SHA-256 of an arbitrary byte string.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::string& path);

// Digest over every named parameter and buffer (name, dtype, shape, raw
// bytes) in registration order. Two modules with equal digests hold
// bit-identical state.
std::string state_digest(const torch::nn::Module& module);

std::string shape_string(at::IntArrayRef sizes);

}  // namespace dfq

#endif  // DFQ_DIGEST_HPP_
