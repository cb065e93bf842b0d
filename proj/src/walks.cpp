#include "dampmap/walks.hpp"

#include "dampmap/dataset.hpp"
#include "dampmap/oracle.hpp"
#include "dampmap/parallel.hpp"
#include "dampmap/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace dampmap {

const char* walk_status_name(WalkStatus s) {
    switch (s) {
        case WalkStatus::converged: return "converged";
        case WalkStatus::not_triggered: return "not_triggered";
        case WalkStatus::stalled: return "stalled";
        case WalkStatus::iter_cap: return "iter_cap";
        case WalkStatus::left_box: return "left_box";
    }
    return "?";
}

std::optional<StepOutcome> walk_step(const OperatingPoint& x, const Vec4& grad,
                                     double zeta, WalkPhase phase,
                                     const WalkConfig& cfg, const Hypercube& h) {
    // Gradient in normalized coordinates, restricted to the active pair.
    Vec4 g = grad.cwiseProduct(h.range());
    if (phase == WalkPhase::power) {
        g[2] = 0.0;
        g[3] = 0.0;
    } else {
        g[0] = 0.0;
        g[1] = 0.0;
    }
    const double norm = g.norm();
    if (norm < cfg.min_grad_norm) return std::nullopt;

    // Step length shrinks linearly with the remaining distance to the
    // margin; the sign moves zeta toward it.
    const double rel = (zeta - cfg.target_zeta) / cfg.target_zeta;
    const double alpha = -cfg.alpha0 * std::clamp(rel, -1.0, 1.0);
    if (alpha == 0.0) return StepOutcome{x, false};  // exactly on the margin

    const Vec4 u = h.to_unit(x.vec()) + (alpha / norm) * g;
    const Vec4 u_clipped = u.cwiseMax(0.0).cwiseMin(1.0);

    StepOutcome out;
    out.x = OperatingPoint::from_vec(h.from_unit(u_clipped));
    out.clipped = (u - u_clipped).cwiseAbs().maxCoeff() > 0.0;
    return out;
}

namespace {

WalkResult run_phase(const LabeledSample& seed, WalkPhase phase,
                     const WalkConfig& cfg, const Hypercube& h) {
    WalkResult result;
    result.path.emplace_back(seed.x, seed.zeta);

    if (cfg.in_target_band(seed.zeta)) {
        result.status = WalkStatus::converged;
        return result;
    }

    OperatingPoint x = seed.x;
    double zeta = seed.zeta;
    Vec4 grad = seed.grad;
    int clip_streak = 0;

    for (int it = 0; it < cfg.max_iters; ++it) {
        const auto step = walk_step(x, grad, zeta, phase, cfg, h);
        if (!step) {
            result.status = WalkStatus::stalled;
            return result;
        }
        const DampingResult r = min_damping(step->x);
        x = step->x;
        zeta = r.zeta_c;
        grad = r.gradient;  // binding mode may switch mid-walk
        result.path.emplace_back(x, zeta);

        if (cfg.in_target_band(zeta)) {
            result.status = WalkStatus::converged;
            return result;
        }
        clip_streak = step->clipped ? clip_streak + 1 : 0;
        if (clip_streak >= 2) {
            result.status = WalkStatus::left_box;
            return result;
        }
        if (r.degenerate) {
            result.status = WalkStatus::stalled;
            return result;
        }
    }
    result.status = WalkStatus::iter_cap;
    return result;
}

}  // namespace

DirectedWalkOutcome directed_walk(const LabeledSample& seed, const WalkConfig& cfg,
                                  const Hypercube& h) {
    DirectedWalkOutcome out;
    if (!cfg.in_trigger_band(seed.zeta)) {
        out.power.status = WalkStatus::not_triggered;
        out.control.status = WalkStatus::not_triggered;
        return out;
    }
    out.power = run_phase(seed, WalkPhase::power, cfg, h);
    out.control = run_phase(seed, WalkPhase::control, cfg, h);

    for (const WalkResult* w : {&out.power, &out.control}) {
        if (w->status != WalkStatus::converged) continue;
        const OperatingPoint terminus = w->path.back().first;
        const DampingResult r = min_damping(terminus);
        out.emitted.push_back(LabeledSample{terminus, r.zeta_c, r.gradient,
                                            classify(r.zeta_c), Origin::dw});
    }
    return out;
}

std::vector<LabeledSample> enrich_with_walks(const std::vector<LabeledSample>& seeds,
                                             const WalkConfig& cfg,
                                             const Hypercube& h) {
    std::vector<std::vector<LabeledSample>> per_seed(seeds.size());
    parallel_for(seeds.size(), [&](std::size_t i) {
        per_seed[i] = directed_walk(seeds[i], cfg, h).emitted;
    });
    std::vector<LabeledSample> out;
    for (auto& v : per_seed) out.insert(out.end(), v.begin(), v.end());
    return out;
}

void save_walk_path_csv(const std::filesystem::path& path, const WalkResult& walk) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for write: " + path.string());
    f << "step,x1,x2,x3,x4,zeta\n";
    for (std::size_t i = 0; i < walk.path.size(); ++i) {
        const Vec4 x = walk.path[i].first.vec();
        f << i;
        for (int d = 0; d < 4; ++d) f << ',' << format_double(x[d]);
        f << ',' << format_double(walk.path[i].second) << '\n';
    }
}

}  // namespace dampmap
