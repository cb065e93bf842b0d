#pragma once

#include "dampmap/dataset.hpp"
#include "dampmap/embedding.hpp"
#include "dampmap/loops.hpp"
#include "dampmap/milp.hpp"
#include "dampmap/net.hpp"
#include "dampmap/walks.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace dampmap {

enum class Variant : std::uint8_t { base, dw, ni, vi, pr };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

/// One cell of the hyper-parameter search space.
struct HyperCell {
    int layers = 3;        // hidden layers
    int width = 32;        // neurons per hidden layer
    double l0 = 0.05;
    double gamma = 1.0;
    double alpha_j = 0.0;
    double delta = 3.0;    // margin width for NI/VI

    [[nodiscard]] std::vector<int> widths() const;
};

struct ExperimentConfig {
    std::uint64_t master_seed = 42;
    Variant variant = Variant::base;
    std::string sampler = "grid";  // grid | uniform | lhc
    int size_per_dim = 5;          // dataset size is size_per_dim^4
    int test_grid_per_dim = 11;
    int selection_seeds = 10;
    int assessment_seeds = 10;
    int epochs = 3000;
    int interrupt_epoch = 1000;

    HyperCell train;

    // Search space for tune(); desk-scale subsets of the full options.
    std::vector<int> grid_layers{2, 3};
    std::vector<int> grid_widths{16, 32};
    std::vector<double> grid_l0{0.02, 0.05};
    std::vector<double> grid_gamma{1.0};
    std::vector<double> grid_alpha_j{0.0, 0.1};
    std::vector<double> grid_delta{3.0};

    std::size_t pool_size = 1'000'000;
    std::size_t n_samples = 200;
    WalkConfig walk;

    double verify_delta = 0.25;
    long bnb_node_limit = 1'000'000;
    int embed_resolution = 33;
    std::vector<EmbeddingQuery> embed_queries;  // filled with defaults if empty

    /// Paper-scale settings: full option grid, 21^4 test set, 100-run
    /// assessment.
    void apply_full_scale();
};

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(std::istream& in);

/// Two representative region queries, one per fixed pair.
std::vector<EmbeddingQuery> default_embed_queries();

/// Canonical one-line-per-field rendering; hashing it addresses artifacts.
std::string config_canonical_string(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

/// Oracle-labeled evaluation grid, sealed from every other stage.
std::vector<LabeledSample> build_test_set(int per_dim);

/// Base dataset for the configured sampler (split + standardizer, no test).
SplitDataset build_base_dataset(const ExperimentConfig& cfg);

/// One training run under the configured variant. NI/VI enrich mid-run and
/// mutate the run-local dataset copy.
struct RunOutput {
    Mlp net;
    TrainReport report;
    EnrichResult enrichment;  // empty for base/dw/pr
    SplitDataset dataset;     // post-enrichment state
    bool diverged = false;
    int diverged_epoch = -1;
};

RunOutput run_training(SplitDataset dataset, const ExperimentConfig& cfg,
                       const HyperCell& cell, std::uint64_t init_seed,
                       std::uint64_t enrich_seed);

// --- hyper-parameter tuning -----------------------------------------------

struct TuneCellResult {
    HyperCell cell;
    double mean_val_objective = 0.0;
    int diverged_runs = 0;
};

struct TuneResult {
    HyperCell selected;
    std::vector<TuneCellResult> table;
};

/// Full grid x selection_seeds; minimizes the mean validation objective.
/// Ties prefer fewer parameters, then the lexicographically first cell.
TuneResult tune(const ExperimentConfig& cfg, const SplitDataset& base);

void save_tune_csv(const std::filesystem::path& path, const TuneResult& result);

// --- assessment --------------------------------------------------------------

struct AssessmentRun {
    int run = 0;
    std::uint64_t seed = 0;
    bool diverged = false;
    double mse_total = 0.0;
    std::array<double, kNumClasses> mse_class{};
    std::array<std::size_t, kNumClasses> n_class{};
    int best_epoch = -1;
};

struct AssessmentReport {
    std::vector<AssessmentRun> runs;
    int failures = 0;
};

/// Per-run total and per-class test MSE in standardized output units.
AssessmentReport assess(const ExperimentConfig& cfg, const HyperCell& cell,
                        const SplitDataset& base,
                        const std::vector<LabeledSample>& test_set);

void save_assessment_csv(const std::filesystem::path& runs_path,
                         const std::filesystem::path& summary_path,
                         const AssessmentReport& report);

/// Interpolated percentile of a non-empty sorted range, p in [0, 100].
double percentile(const std::vector<double>& sorted, double p);

// --- pipeline ------------------------------------------------------------------

/// Runs dataset creation, enrichment, training, assessment, verification,
/// and embedding exports under out_dir/run-<hash>/. Returns the run dir.
std::filesystem::path run_pipeline(const ExperimentConfig& cfg,
                                   const std::filesystem::path& out_dir);

void save_histogram_csv(const std::filesystem::path& path, const ClassHistogram& h);

}  // namespace dampmap
