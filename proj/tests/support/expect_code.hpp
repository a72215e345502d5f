/*
 * Copyright (c) 2026 The aasvd Authors. All Rights Reserved
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


#pragma once

#include <gtest/gtest.h>

#include <string>

#include "aasvd/error.hpp"

namespace aasvd::testing_support {

// Success when `fn` throws aasvd::Error carrying `code`.
template <typename F>
::testing::AssertionResult throws_code(F&& fn, ErrorCode code) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.code() == code) return ::testing::AssertionSuccess();
    return ::testing::AssertionFailure() << "wrong code: " << e.what();
  } catch (const std::exception& e) {
    return ::testing::AssertionFailure() << "foreign exception: " << e.what();
  }
  return ::testing::AssertionFailure() << "nothing thrown";
}

}  // namespace aasvd::testing_support
