#include "dampmap/sampling.hpp"

#include "dampmap/oracle.hpp"
#include "dampmap/parallel.hpp"
#include "dampmap/rng.hpp"

#include <cmath>

namespace dampmap {

std::vector<OperatingPoint> sample_grid(const Hypercube& h, int n_per_dim) {
    if (n_per_dim < 2)
        throw std::invalid_argument("grid needs at least 2 points per dimension");
    const std::size_t n = static_cast<std::size_t>(n_per_dim);
    std::vector<std::vector<double>> axes(4);
    for (int d = 0; d < 4; ++d) {
        axes[d].resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double t = static_cast<double>(j) / static_cast<double>(n - 1);
            axes[d][j] = h.lower[d] + t * (h.upper[d] - h.lower[d]);
        }
        axes[d].back() = h.upper[d];  // endpoint exact
    }
    std::vector<OperatingPoint> out;
    out.reserve(n * n * n * n);
    for (double a : axes[0])
        for (double b : axes[1])
            for (double c : axes[2])
                for (double d : axes[3]) out.push_back({a, b, c, d});
    return out;
}

std::vector<OperatingPoint> sample_uniform(const Hypercube& h, std::size_t n,
                                           std::uint64_t seed) {
    Rng rng(seed);
    std::vector<OperatingPoint> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vec4 v;
        for (int d = 0; d < 4; ++d) v[d] = rng.uniform(h.lower[d], h.upper[d]);
        out.push_back(OperatingPoint::from_vec(v));
    }
    return out;
}

std::vector<OperatingPoint> sample_lhc(const Hypercube& h, std::size_t n,
                                       std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<std::size_t>> strata(4);
    for (int d = 0; d < 4; ++d) strata[d] = rng.permutation(n);
    std::vector<OperatingPoint> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vec4 v;
        for (int d = 0; d < 4; ++d) {
            const double u =
                (static_cast<double>(strata[d][i]) + rng.uniform()) / static_cast<double>(n);
            v[d] = h.lower[d] + u * (h.upper[d] - h.lower[d]);
        }
        out.push_back(OperatingPoint::from_vec(v));
    }
    return out;
}

StabilityClass classify(double zeta) {
    if (std::isnan(zeta)) throw std::invalid_argument("cannot classify NaN margin");
    if (zeta > 6.0) return StabilityClass::Stable;
    if (zeta > 3.25) return StabilityClass::MStable;
    if (zeta >= 2.75) return StabilityClass::Marginal;
    if (zeta > 0.0) return StabilityClass::MUnstable;
    return StabilityClass::Unstable;
}

std::vector<LabeledSample> label(const std::vector<OperatingPoint>& points,
                                 Origin origin) {
    std::vector<LabeledSample> out(points.size());
    parallel_for(points.size(), [&](std::size_t i) {
        const DampingResult r = min_damping(points[i]);
        out[i] = LabeledSample{points[i], r.zeta_c, r.gradient, classify(r.zeta_c),
                               origin};
    });
    return out;
}

}  // namespace dampmap
