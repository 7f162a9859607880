#pragma once

#include <cstddef>
#include <functional>

namespace survcate {

// Caps the worker count used by parallel_for. 0 selects hardware concurrency.
void set_num_threads(std::size_t n);
std::size_t num_threads();

// Runs body(i) for i in [0, n). Each index must write only its own output so
// the result does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace survcate
