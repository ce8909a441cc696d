#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emiv/constants.hpp"

namespace emiv {

/// @brief Multi-cycle MIMO scattered-field record.
///
/// data is indexed [cycle][freq][tx][rx], row-major with rx fastest. Entries
/// are the complex scattered field at the receiver (total minus incident).
struct MeasurementSet {
    int cycles = 0;                ///< N_M
    int txCount = 0;               ///< P
    int rxCount = 0;               ///< Q
    std::vector<double> freqsHz;   ///< acquisition frequencies, ascending
    std::vector<cplx> data;

    double snrDb = 0.0;            ///< +inf means noiseless
    std::uint64_t seed = 0;        ///< noise seed (meaningful when snrDb finite)
    std::string sceneHash;         ///< hash of the generating scene document
    bool crimeMode = false;        ///< generated through the inversion operators

    int freqCount() const { return static_cast<int>(freqsHz.size()); }
    std::size_t index(int m, int f, int p, int q) const {
        return ((static_cast<std::size_t>(m) * freqsHz.size() + f) * txCount + p) * rxCount + q;
    }
    std::size_t count() const {
        return static_cast<std::size_t>(cycles) * freqsHz.size() * txCount * rxCount;
    }
};

/// Per-cycle translation estimate relative to the reference cycle [m].
struct ShiftEstimate {
    double dx = 0.0;
    double dy = 0.0;
    double quality = 0.0;  ///< correlation peak / total energy, in [0, 1]
};

/// Trajectory estimate for a whole acquisition; ref is 0-based.
struct ShiftSet {
    int refCycle = 0;
    std::vector<ShiftEstimate> shifts;  // one per cycle; shifts[ref] == (0,0)
};

}  // namespace emiv
