// Copyright 2026 The tsaseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the license.

#pragma once

namespace tsaseg {

/// Keeps large freed blocks inside the process heap (glibc only; a no-op elsewhere).
/// Training allocates multi-megabyte temporaries every step, and returning them to the
/// kernel makes each pass fault its pages back in. Call once at program start.
void tune_allocator();

} // namespace tsaseg
