#include "fftw_lock.hpp"

namespace emiv {

std::mutex& fftw_plan_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace emiv
