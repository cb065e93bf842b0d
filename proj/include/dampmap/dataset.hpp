#pragma once

#include "dampmap/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dampmap {

/// Affine feature scaling fitted on the training split only and applied
/// unchanged to validation and test data.
struct Standardizer {
    Vec4 mu_x = Vec4::Zero();
    Vec4 sigma_x = Vec4::Ones();
    double mu_y = 0.0;
    double sigma_y = 1.0;

    [[nodiscard]] Vec4 transform_x(const Vec4& x) const {
        return (x - mu_x).cwiseQuotient(sigma_x);
    }
    [[nodiscard]] Vec4 inverse_x(const Vec4& xs) const {
        return mu_x + xs.cwiseProduct(sigma_x);
    }
    [[nodiscard]] double transform_y(double y) const { return (y - mu_y) / sigma_y; }
    [[nodiscard]] double inverse_y(double ys) const { return mu_y + ys * sigma_y; }
};

/// Population-moment fit. Throws std::runtime_error when any coordinate is
/// constant across the training split.
Standardizer fit_standardizer(std::span<const LabeledSample> train);

/// Chain rule taking a raw gradient dy/dx into standardized coordinates.
Vec4 transform_gradient(const Vec4& grad_raw, const Standardizer& std);

/// Seeded 80/20 shuffle split (floor rule for the training share).
/// Requires at least 5 samples.
std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> split(
    std::vector<LabeledSample> samples, std::uint64_t seed);

/// Read-only handle on train/val used by training and enrichment; the test
/// split is deliberately unreachable through it.
struct TrainValView {
    std::span<const LabeledSample> train;
    std::span<const LabeledSample> val;
    const Standardizer* standardizer = nullptr;
};

struct SplitDataset {
    std::vector<LabeledSample> train;
    std::vector<LabeledSample> val;
    std::vector<LabeledSample> test;  // sealed: only final assessment reads it
    std::uint64_t split_seed = 0;
    std::uint32_t enrich_count = 0;
    Standardizer standardizer;

    [[nodiscard]] TrainValView view() const {
        return TrainValView{train, val, &standardizer};
    }
};

/// Build a dataset from labeled samples: 80/20 split plus standardizer fit.
SplitDataset make_dataset(std::vector<LabeledSample> samples, std::uint64_t seed);

/// Append new labeled points (themselves split 80/20 from the dataset's
/// seed stream) and refit the standardizer on the enlarged train split.
void enrich(SplitDataset& ds, std::vector<LabeledSample> new_samples);

struct ClassHistogram {
    std::array<std::size_t, kNumClasses> counts{};
    std::array<double, kNumClasses> shares{};
    std::size_t total = 0;
};

ClassHistogram class_histogram(std::span<const LabeledSample> samples);

// --- persistence ---------------------------------------------------------

/// Shortest round-trip decimal rendering of a double.
std::string format_double(double v);

void save_samples_csv(const std::filesystem::path& path,
                      std::span<const LabeledSample> samples);
std::vector<LabeledSample> load_samples_csv(const std::filesystem::path& path);

/// Dataset directory: train/val/test CSVs plus a JSON sidecar carrying the
/// seed, sampler tag, bounds, split sizes, and standardizer.
void save_dataset(const std::filesystem::path& dir, const SplitDataset& ds,
                  const std::string& sampler_tag);
SplitDataset load_dataset(const std::filesystem::path& dir);

}  // namespace dampmap
