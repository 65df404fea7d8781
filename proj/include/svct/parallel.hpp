#pragma once

#include <cstddef>
#include <functional>

namespace svct {

// Worker count used by the projector and FBP back-projector. Defaults to 1.
// Each output element is always produced by exactly one worker with a fixed
// summation order, so results do not depend on this setting.
void set_worker_threads(std::size_t count);
std::size_t worker_threads();

// Runs body(i) for i in [begin, end), split into contiguous chunks.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& body);

}  // namespace svct
