#pragma once

#include "dampmap/types.hpp"

#include <cstdint>
#include <vector>

namespace dampmap {

/// Full factorial grid, endpoints included. Requires n_per_dim >= 2.
std::vector<OperatingPoint> sample_grid(const Hypercube& h, int n_per_dim);

/// n i.i.d. uniform points, deterministic for a given seed.
std::vector<OperatingPoint> sample_uniform(const Hypercube& h, std::size_t n,
                                           std::uint64_t seed);

/// Latin hypercube design: one point per stratum and dimension, stratum
/// order permuted independently per dimension, position uniform within
/// each stratum.
std::vector<OperatingPoint> sample_lhc(const Hypercube& h, std::size_t n,
                                       std::uint64_t seed);

/// Stability class from the damping margin in percent. Band edges:
/// 6 belongs to MStable, 3.25 and 2.75 to Marginal, 0 to Unstable.
StabilityClass classify(double zeta);

/// Ground-truth labels for a batch of points (parallel map).
std::vector<LabeledSample> label(const std::vector<OperatingPoint>& points,
                                 Origin origin);

}  // namespace dampmap
