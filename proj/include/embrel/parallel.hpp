#pragma once

#include <cstddef>
#include <functional>

namespace embrel {

/// Runs body(i) for i in [0, count) across worker threads. Work items must be
/// independent; each writes only its own output slot, so results do not
/// depend on the schedule. threads == 0 picks the hardware concurrency.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body,
                  unsigned threads = 0);

/// Chunked variant: body(begin, end) receives half-open index ranges. Lets
/// workers reuse per-chunk scratch buffers.
void parallel_for_blocked(std::size_t count, std::size_t block,
                          const std::function<void(std::size_t, std::size_t)>& body,
                          unsigned threads = 0);

}  // namespace embrel
