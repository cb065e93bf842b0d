#pragma once

#include "dampmap/milp.hpp"
#include "dampmap/net.hpp"
#include "dampmap/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dampmap {

struct EnrichConfig {
    std::size_t pool_size = 1'000'000;
    std::size_t n_samples = 200;
    double delta = 3.0;        // percent half-width of the target band
    int interrupt_epoch = 1000;
    std::uint64_t seed = 0;
};

struct EnrichResult {
    std::vector<LabeledSample> batch;
    bool empty_warning = false;          // candidate set collapsed
    bool fallback_unfiltered = false;    // verification failed everywhere
    double excluded_volume_fraction = 0.0;  // share of the pool inside regions
    std::vector<Certificate> certificates;  // one per hypercube corner
};

/// Prediction-guided resampling: keep pool points whose predicted margin
/// lies in 3 +- delta, subsample, and label with the oracle.
EnrichResult ni_enrich(const Mlp& net, const Hypercube& h, const EnrichConfig& cfg);

/// Certificate-guided resampling: verified balls around the 16 corners are
/// removed from the pool before subsampling and labeling.
EnrichResult vi_enrich(const Mlp& net, const Hypercube& h, const EnrichConfig& cfg,
                       const BnbOptions& bnb = {});

/// Distance to the nearest threshold crossing among the first n draws of a
/// seeded uniform stream; +inf when no draw crosses.
double epsilon_statistical(const UnitBoxNet& net, const Vec4& anchor,
                           double threshold, bool crossing_below, std::size_t n,
                           std::uint64_t seed);

struct EpsilonComparison {
    int corner_index = -1;
    Vec4 anchor = Vec4::Zero();
    double epsilon_verified = 0.0;
    std::vector<std::size_t> schedule;
    // ratios[p][k]: percentile p of eps_stat/eps_verified at schedule[k]
    std::vector<std::vector<double>> ratio_percentiles;
};

inline const std::vector<int>& epsilon_percentile_levels() {
    static const std::vector<int> levels{0, 10, 25, 50, 75, 90, 100};
    return levels;
}

/// Fig.-style study of the statistical estimator against the certified
/// value, replicated over sampling seeds. Skipped corners are omitted.
std::vector<EpsilonComparison> compare_stat_vs_verified(
    const UnitBoxNet& net, const std::vector<Certificate>& certificates,
    const std::vector<std::size_t>& schedule, std::size_t n_seeds,
    std::uint64_t master_seed);

void save_epsilon_comparison_csv(const std::filesystem::path& path,
                                 const std::vector<EpsilonComparison>& table);

/// The 16 corners of the unit box in a fixed order (bit i of the index
/// selects dimension i at its upper bound).
std::vector<Vec4> unit_corners();

/// Log-spaced evaluation counts from 10 up to max_n.
std::vector<std::size_t> default_epsilon_schedule(std::size_t max_n);

}  // namespace dampmap
