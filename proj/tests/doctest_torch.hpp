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

#ifndef DFQ_TESTS_DOCTEST_TORCH_HPP_
#define DFQ_TESTS_DOCTEST_TORCH_HPP_

// c10 logging defines CHECK; doctest needs the name.
#include <torch/torch.h>
#undef CHECK

#include "doctest.h"

#endif  // DFQ_TESTS_DOCTEST_TORCH_HPP_
