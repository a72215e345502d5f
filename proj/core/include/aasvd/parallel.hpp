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

#include <cstddef>
#include <functional>

namespace aasvd {

// Worker cap: AASVD_THREADS if set to a positive integer, else the hardware
// count (at least 1).
int max_threads();

// Runs fn(0) .. fn(n - 1), possibly concurrently. Tasks must write disjoint
// state. If several tasks throw, the exception of the lowest index is
// rethrown, so failures are reported the same way in serial and parallel
// mode.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace aasvd
