#pragma once

#include <mutex>

namespace emiv {

/// FFTW plan creation/destruction is not thread-safe (execution is).  Every
/// translation unit that makes or destroys plans must hold this one lock.
std::mutex& fftw_plan_mutex();

}  // namespace emiv
