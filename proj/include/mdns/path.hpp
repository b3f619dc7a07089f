#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "mdns/lattice.hpp"

namespace mdns {

/// One model evaluation inside a replayed trajectory, with the sparse partial
/// derivative of that trajectory's log-weight with respect to the score
/// entries it read. Entries index the D x N output row-major.
struct PathCall {
  std::size_t traj = 0;
  MaskedSeq state;
  double t = NAN;  // NaN for time-free scores
  std::vector<std::pair<int, double>> dW_ds;
};

/// Log-weights W_i(theta) of a batch re-evaluated under the current score,
/// together with every call needed to differentiate them.
struct PathReplay {
  std::vector<double> W;
  std::vector<PathCall> calls;
};

}  // namespace mdns
