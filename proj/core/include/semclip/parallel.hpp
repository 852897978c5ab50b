#pragma once

#include <functional>

namespace semclip {

// 0 = use all hardware threads.
void set_num_threads(int n);
int num_threads();

// Runs fn(i) for i in [0, n). Iterations must write to disjoint state;
// results are then independent of scheduling, which keeps every caller
// deterministic. Nested calls degrade to serial execution.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace semclip
