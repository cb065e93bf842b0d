#pragma once

#include "dampmap/types.hpp"

#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

namespace dampmap {

/// Step-law and termination settings for boundary-seeking walks.
struct WalkConfig {
    double target_zeta = 3.0;       // percent, the class boundary of interest
    double trigger_halfwidth = 6.0; // walk only points with zeta in 3 +- 6
    double target_halfwidth = 0.25; // stop once zeta is in 3 +- 0.25
    double alpha0 = 0.05;           // base step in normalized units
    int max_iters = 50;
    double min_grad_norm = 1e-8;

    [[nodiscard]] bool in_trigger_band(double zeta) const {
        return std::abs(zeta - target_zeta) <= trigger_halfwidth;
    }
    [[nodiscard]] bool in_target_band(double zeta) const {
        return std::abs(zeta - target_zeta) <= target_halfwidth;
    }
};

enum class WalkStatus : std::uint8_t {
    converged,
    not_triggered,
    stalled,
    iter_cap,
    left_box,
};

const char* walk_status_name(WalkStatus s);

struct WalkResult {
    std::vector<std::pair<OperatingPoint, double>> path;  // visited (x, zeta)
    WalkStatus status = WalkStatus::not_triggered;
};

/// Which pair of coordinates a walk phase is allowed to move.
enum class WalkPhase : std::uint8_t { power, control };

struct StepOutcome {
    OperatingPoint x;
    bool clipped = false;  // step hit the box and was projected back
};

/// One steepest-descent step toward the target margin, taken in normalized
/// coordinates on the phase's active pair and clipped to the box.
/// Empty when the masked gradient is below min_grad_norm.
std::optional<StepOutcome> walk_step(const OperatingPoint& x, const Vec4& grad,
                                     double zeta, WalkPhase phase,
                                     const WalkConfig& cfg, const Hypercube& h);

struct DirectedWalkOutcome {
    WalkResult power;
    WalkResult control;
    std::vector<LabeledSample> emitted;  // converged termini, origin dw
};

/// Two-phase walk from a labeled seed: power pair first, then the control
/// pair starting again from the seed. Runs only for trigger-band seeds.
DirectedWalkOutcome directed_walk(const LabeledSample& seed, const WalkConfig& cfg,
                                  const Hypercube& h);

/// All converged walk termini over a batch of seeds (parallel map).
std::vector<LabeledSample> enrich_with_walks(const std::vector<LabeledSample>& seeds,
                                             const WalkConfig& cfg,
                                             const Hypercube& h);

/// Path CSV: step, x1..x4, zeta. One file per walk.
void save_walk_path_csv(const std::filesystem::path& path, const WalkResult& walk);

}  // namespace dampmap
